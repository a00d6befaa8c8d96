"""Declarative run configuration loaded from a YAML document.

One file covers the whole pipeline: provider endpoints, clustering knobs,
dedup threshold, update policy, corpus filter, storage paths, and the serve
section for the review API. Everything has a sensible default so an empty
mapping is a valid mock-provider configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .clustering import ClusteringError, ClusteringParams, Method
from .domain import DomainError, parse_rfc3339
from .gateway import ProviderConfig
from .store import UpdatePolicy

__all__ = [
    "ConfigError",
    "EmbeddingConfig",
    "ServeConfig",
    "PipelineConfig",
    "load_config",
    "config_from_mapping",
    "with_overrides",
]


class ConfigError(ValueError):
    """Raised when the config document is malformed or inconsistent."""


@dataclass(frozen=True)
class EmbeddingConfig:
    provider: str = "hashed-trigram"
    dimension: int = 256
    seed: int = 7
    cache_path: Optional[str] = None


@dataclass(frozen=True)
class ServeConfig:
    host: str = "127.0.0.1"
    port: int = 8787
    # reviewer id -> static bearer token
    tokens: Mapping[str, str] = field(default_factory=dict)
    console_origin: str = "http://localhost:5173"
    corpus_path: Optional[str] = None


@dataclass(frozen=True)
class PipelineConfig:
    completion: ProviderConfig = field(
        default_factory=lambda: ProviderConfig(provider_id="mock")
    )
    judge: ProviderConfig = field(default_factory=lambda: ProviderConfig(provider_id="mock"))
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    clustering: ClusteringParams = field(default_factory=ClusteringParams)
    max_similarity: float = 0.9
    policy: UpdatePolicy = field(default_factory=UpdatePolicy)
    company: Optional[str] = None
    window_from: Optional[datetime] = None
    window_to: Optional[datetime] = None
    parallelism: int = 4
    run_id: Optional[str] = None
    out_dir: str = "runs"
    store_dir: str = "kb"
    serve: ServeConfig = field(default_factory=ServeConfig)

    def __post_init__(self) -> None:
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if not 0.0 <= self.max_similarity <= 1.0:
            raise ConfigError("max_similarity must lie in [0, 1]")
        if (
            self.window_from is not None
            and self.window_to is not None
            and self.window_from > self.window_to
        ):
            raise ConfigError("window 'from' must not be after 'to'")


def _parse_ts(value: Any, key: str) -> Optional[datetime]:
    if value is None:
        return None
    if isinstance(value, datetime):
        return value
    try:
        return parse_rfc3339(str(value))
    except (ValueError, DomainError) as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _provider_from(raw: Any, section: str) -> ProviderConfig:
    if raw is None:
        return ProviderConfig(provider_id="mock")
    if isinstance(raw, str):
        return ProviderConfig(provider_id=raw)
    if not isinstance(raw, Mapping):
        raise ConfigError(f"providers.{section} must be a mapping or provider id")
    try:
        return ProviderConfig(
            provider_id=raw.get("provider_id", "mock"),
            endpoint=raw.get("endpoint", "mock"),
            credential_ref=raw.get("credential_ref", ""),
            max_input_tokens=int(raw.get("max_input_tokens", 4000)),
            max_output_tokens=int(raw.get("max_output_tokens", 4000)),
            decoding=dict(raw.get("decoding", {})),
            max_in_flight=int(raw.get("max_in_flight", 4)),
            timeout_seconds=float(raw.get("timeout_seconds", 30.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"providers.{section}: {exc}") from exc


def config_from_mapping(raw: Mapping[str, Any]) -> PipelineConfig:
    """Build a PipelineConfig from a parsed YAML/JSON mapping."""
    if raw is None:
        raw = {}
    if not isinstance(raw, Mapping):
        raise ConfigError("config document must be a mapping")

    providers = raw.get("providers", {}) or {}
    emb_raw = raw.get("embedding", {}) or {}
    clu_raw = raw.get("clustering", {}) or {}
    pol_raw = raw.get("policy", {}) or {}
    win_raw = raw.get("window", {}) or {}
    run_raw = raw.get("run", {}) or {}
    serve_raw = raw.get("serve", {}) or {}

    try:
        method = Method(str(clu_raw.get("method", "dbscan")).lower())
    except ValueError as exc:
        raise ConfigError(f"clustering.method: {exc}") from exc
    try:
        clustering = ClusteringParams(
            eps=float(clu_raw.get("eps", 0.3)),
            min_samples=int(clu_raw.get("min_samples", 2)),
            method=method,
            k=int(clu_raw.get("k", 1)),
            seed=int(clu_raw.get("seed", 0)),
            max_iterations=int(clu_raw.get("max_iterations", 100)),
        )
        policy = UpdatePolicy(
            tau_new=float(pol_raw.get("tau_new", 0.85)),
            tau_obsolete=float(pol_raw.get("tau_obsolete", 0.70)),
            auto_insert=bool(pol_raw.get("auto_insert", False)),
        )
    except (ValueError, ClusteringError) as exc:
        raise ConfigError(str(exc)) from exc

    tokens = serve_raw.get("tokens", {}) or {}
    if not isinstance(tokens, Mapping) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in tokens.items()
    ):
        raise ConfigError("serve.tokens must map reviewer ids to token strings")

    return PipelineConfig(
        completion=_provider_from(providers.get("completion"), "completion"),
        judge=_provider_from(providers.get("judge"), "judge"),
        embedding=EmbeddingConfig(
            provider=str(emb_raw.get("provider", "hashed-trigram")),
            dimension=int(emb_raw.get("dimension", 256)),
            seed=int(emb_raw.get("seed", 7)),
            cache_path=emb_raw.get("cache"),
        ),
        clustering=clustering,
        max_similarity=float((raw.get("dedup", {}) or {}).get("max_similarity", 0.9)),
        policy=policy,
        company=raw.get("company"),
        window_from=_parse_ts(win_raw.get("from"), "window.from"),
        window_to=_parse_ts(win_raw.get("to"), "window.to"),
        parallelism=int(run_raw.get("parallelism", 4)),
        run_id=run_raw.get("id"),
        out_dir=str(run_raw.get("out", "runs")),
        store_dir=str(raw.get("store", {}).get("root", "kb") if raw.get("store") else "kb"),
        serve=ServeConfig(
            host=str(serve_raw.get("host", "127.0.0.1")),
            port=int(serve_raw.get("port", 8787)),
            tokens=dict(tokens),
            console_origin=str(serve_raw.get("console_origin", "http://localhost:5173")),
            corpus_path=serve_raw.get("corpus_path"),
        ),
    )


def load_config(path: str | Path) -> PipelineConfig:
    """Parse a YAML config file; an empty or absent document means defaults."""
    with open(path, encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return config_from_mapping(raw or {})


def with_overrides(cfg: PipelineConfig, **kwargs: Any) -> PipelineConfig:
    """Apply non-None CLI flag overrides onto a loaded config."""
    updates = {k: v for k, v in kwargs.items() if v is not None}
    clustering_keys = {k: updates.pop(k) for k in ("eps", "min_samples") if k in updates}
    if clustering_keys:
        updates["clustering"] = replace(cfg.clustering, **clustering_keys)
    if "provider" in updates:
        updates["completion"] = replace(cfg.completion, provider_id=updates.pop("provider"))
    if not updates:
        return cfg
    return replace(cfg, **updates)
