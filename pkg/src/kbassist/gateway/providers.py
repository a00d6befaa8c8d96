"""Completion providers: transport, retries, budgets, and the offline mock.

The mock provider answers every prompt as a pure function of the prompt text,
which makes whole-pipeline runs deterministic and testable with no network.
Real providers are reached over HTTP with bounded retries for transport
failures only; a malformed reply is the caller's business, never retried here.
"""
from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import numpy as np
import requests

from ..embedding import HashedTrigramProvider, pairwise_distances
from ..errors import ProviderUnavailable
from .prompts import PromptRole, PromptText, estimate_tokens

_TRANSPORT_ATTEMPTS = 3
_BACKOFF_SECONDS = 0.25

MOCK_JUSTIFICATION = "Question asked verbatim by the customer and answered by the agent."
MOCK_JUDGE_JUSTIFICATION = "Offline judge: every provided pair counted as correct."


class BudgetExceeded(Exception):
    pass


@dataclass(frozen=True)
class ProviderConfig:
    provider_id: str
    endpoint: str = "mock"
    credential_ref: str = ""
    max_input_tokens: int = 4000
    max_output_tokens: int = 4000
    decoding: Mapping[str, Any] = field(default_factory=dict)
    max_in_flight: int = 4
    timeout_seconds: float = 30.0

    def __post_init__(self) -> None:
        if not self.provider_id:
            raise ValueError("provider_id must be non-empty")
        if self.max_input_tokens <= 0 or self.max_output_tokens <= 0:
            raise ValueError("token limits must be positive")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


def credential_env_name(provider_id: str) -> str:
    return "KBASSIST_PROVIDER_" + re.sub(r"[^A-Za-z0-9]", "_", provider_id).upper() + "_KEY"


def _resolve_credential(cfg: ProviderConfig) -> Optional[str]:
    value = os.environ.get(credential_env_name(cfg.provider_id))
    if value:
        return value
    if cfg.credential_ref:
        return os.environ.get(cfg.credential_ref)
    return None


def complete(p: PromptText, cfg: ProviderConfig) -> str:
    """Send one prompt and return the raw reply text, capped at the output budget."""
    if estimate_tokens(p.text) > cfg.max_input_tokens:
        raise BudgetExceeded(
            f"prompt is {estimate_tokens(p.text)} tokens, budget {cfg.max_input_tokens}"
        )
    if cfg.provider_id == "mock" or cfg.endpoint == "mock":
        reply = mock_reply(p)
    else:
        reply = _http_complete(p, cfg)
    return reply[: 4 * cfg.max_output_tokens]


# One in-flight limiter per remote endpoint, shared across threads.
_semaphores: dict[tuple[str, str], threading.BoundedSemaphore] = {}
_semaphores_lock = threading.Lock()


def _limiter(cfg: ProviderConfig) -> threading.BoundedSemaphore:
    key = (cfg.provider_id, cfg.endpoint)
    with _semaphores_lock:
        if key not in _semaphores:
            _semaphores[key] = threading.BoundedSemaphore(cfg.max_in_flight)
        return _semaphores[key]


def _http_complete(p: PromptText, cfg: ProviderConfig) -> str:
    headers = {"Content-Type": "application/json"}
    credential = _resolve_credential(cfg)
    if credential:
        headers["Authorization"] = f"Bearer {credential}"
    body = {"prompt": p.text, "max_tokens": cfg.max_output_tokens}
    body.update(cfg.decoding)
    last_error: Optional[Exception] = None
    with _limiter(cfg):
        for attempt in range(_TRANSPORT_ATTEMPTS):
            if attempt:
                time.sleep(_BACKOFF_SECONDS * 2 ** (attempt - 1))
            try:
                resp = requests.post(
                    cfg.endpoint, json=body, headers=headers, timeout=cfg.timeout_seconds
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code >= 500:
                last_error = ProviderUnavailable(
                    f"{cfg.endpoint} returned {resp.status_code}"
                )
                continue
            if resp.status_code >= 400:
                raise ProviderUnavailable(
                    f"{cfg.endpoint} rejected the request: {resp.status_code} {resp.text[:200]}"
                )
            try:
                payload = resp.json()
            except ValueError:
                return resp.text
            if isinstance(payload, dict) and isinstance(payload.get("text"), str):
                return payload["text"]
            return resp.text
    raise ProviderUnavailable(
        f"{cfg.endpoint} unreachable after {_TRANSPORT_ATTEMPTS} attempts: {last_error}"
    )


_mock_embedder = HashedTrigramProvider()


def _parse_numbered_qa(text: str) -> list[tuple[str, str]]:
    """Recover (question, answer) tuples from the numbered prompt rendering."""
    entries: list[tuple[str, str]] = []
    pending: Optional[str] = None
    for line in text.splitlines():
        m = re.match(r"\d+\. Question: (.*)$", line)
        if m:
            pending = m.group(1)
            continue
        m = re.match(r"\s+Answer: (.*)$", line)
        if m and pending is not None:
            entries.append((pending, m.group(1)))
            pending = None
    return entries


def _mock_extraction(p: PromptText) -> str:
    transcript = p.text.rpartition("Transcript:\n\n")[2]
    lines = transcript.splitlines()
    out = []
    for i, line in enumerate(lines):
        if not (line.startswith("Customer: ") and line.rstrip().endswith("?")):
            continue
        if i + 1 < len(lines) and lines[i + 1].startswith("Agent: "):
            out.append(
                {
                    "Question": line[len("Customer: ") :],
                    "Answer": lines[i + 1][len("Agent: ") :],
                    "Justification": MOCK_JUSTIFICATION,
                }
            )
    return json.dumps(out, ensure_ascii=False)


def _mock_recommendation(p: PromptText) -> str:
    pairs = _parse_numbered_qa(p.text.rpartition("Question Cluster: ")[2])
    if not pairs:
        return "[]"
    vectors = [_mock_embedder.embed(q) for q, _ in pairs]
    distance_sums = pairwise_distances(vectors).sum(axis=1)
    best = int(np.argmin(distance_sums))
    question, answer = pairs[best]
    return json.dumps(
        [
            {
                "Representative Question": question,
                "Representative Answer": answer,
                "Type": "Extracted",
                "Explanation": "N/A",
            }
        ],
        ensure_ascii=False,
    )


def _mock_judge(p: PromptText) -> str:
    count = len(_parse_numbered_qa(p.text.rpartition("Extracted Questions: ")[2]))
    return json.dumps(
        {
            "Total Correct": count,
            "Total Predicted": count,
            "Justification": MOCK_JUDGE_JUSTIFICATION,
        }
    )


def mock_reply(p: PromptText) -> str:
    """Deterministic reply computed from the prompt text alone.

    Extraction pairs every customer turn ending in "?" with the immediately
    following agent turn, verbatim. Recommendation returns the cluster's
    medoid (smallest summed cosine distance over the offline question
    embeddings, first index on ties) as an Extracted pair. The judge counts
    every provided pair as correct.
    """
    if p.role is PromptRole.EXTRACTION:
        return _mock_extraction(p)
    if p.role is PromptRole.RECOMMENDATION:
        return _mock_recommendation(p)
    return _mock_judge(p)
