"""Command-line surface for corpus ingestion, staged runs, eval, and serving.

Exit codes: 0 success, 1 usage error (bad flags/arguments), 2 runtime failure
(provider, storage, config, or data problems).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional

import click

from .clustering import Cluster, ClusteringError, read_clusters_file, write_clusters_file
from .config import ConfigError, PipelineConfig, load_config, with_overrides
from .domain import (
    DomainError,
    build_corpus,
    dump_transcripts,
    load_transcripts,
    parse_rfc3339,
)
from .embedding import EmbeddingCache, EmbeddingError, embed_pairs
from .errors import ProviderUnavailable
from .evaluation import EvaluationError, write_reports_file
from .gateway import ReplyError
from .pipeline import (
    CLUSTERS_FILE,
    EMBEDDINGS_FILE,
    PAIRS_FILE,
    RECOMMENDATIONS_FILE,
    EmptyCorpus,
    _cluster_stage,
    extract_stage,
    make_embedder,
    read_pairs_file,
    recommend_stage,
    run_eval,
    run_pipeline,
    write_pairs_file,
)
from .recommend import dedup_filter, write_recommendations_file
from .store import KnowledgeStore, StoreError
from .synth import InvalidParams, generate_synthetic_corpus, write_plan_file

_RUNTIME_ERRORS = (
    ConfigError,
    DomainError,
    ClusteringError,
    EmbeddingError,
    EvaluationError,
    StoreError,
    ReplyError,
    ProviderUnavailable,
    EmptyCorpus,
    InvalidParams,
    OSError,
    json.JSONDecodeError,
)


def _load_cfg(config_path: Optional[str], **overrides) -> PipelineConfig:
    cfg = load_config(config_path) if config_path else PipelineConfig()
    return with_overrides(cfg, **overrides)


def _parse_window(value: Optional[str], flag: str):
    if value is None:
        return None
    try:
        return parse_rfc3339(value)
    except (ValueError, DomainError) as exc:
        raise click.UsageError(f"{flag}: {exc}") from exc


config_option = click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="YAML config file.")
company_option = click.option("--company", default=None, help="Only this company's transcripts.")
from_option = click.option("--from", "window_from", default=None, help="Window start (RFC 3339), inclusive.")
to_option = click.option("--to", "window_to", default=None, help="Window end (RFC 3339), inclusive.")
provider_option = click.option("--provider", default=None, help="Completion provider id override.")
out_option = click.option("--out", "out_dir", type=click.Path(), default=None, help="Output directory.")


@click.group()
def cli() -> None:
    """FAQ knowledge-base construction from call transcripts."""


@cli.command()
@click.argument("input_path", type=click.Path(exists=True))
@config_option
@company_option
@from_option
@to_option
@click.option("--out", "out_path", type=click.Path(), required=True, help="Normalized corpus file to write.")
def ingest(input_path, config_path, company, window_from, window_to, out_path) -> int:
    """Validate a transcript file and write the filtered, normalized corpus."""
    cfg = _load_cfg(config_path, company=company)
    transcripts = load_transcripts(input_path)
    corpus = build_corpus(
        transcripts,
        cfg.company,
        _parse_window(window_from, "--from") or cfg.window_from,
        _parse_window(window_to, "--to") or cfg.window_to,
    )
    dump_transcripts(corpus.transcripts, out_path)
    click.echo(f"ingested {len(corpus.transcripts)} transcripts -> {out_path}")
    return 0


@cli.command()
@click.argument("corpus_path", type=click.Path(exists=True))
@config_option
@company_option
@from_option
@to_option
@provider_option
@out_option
def extract(corpus_path, config_path, company, window_from, window_to, provider, out_dir) -> int:
    """Stage 1: extract QA pairs from every transcript in the corpus."""
    cfg = _load_cfg(
        config_path,
        company=company,
        window_from=_parse_window(window_from, "--from"),
        window_to=_parse_window(window_to, "--to"),
        provider=provider,
    )
    corpus = build_corpus(load_transcripts(corpus_path), cfg.company, cfg.window_from, cfg.window_to)
    pairs, failures = extract_stage(corpus, cfg)
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_pairs_file(pairs, out / PAIRS_FILE)
    click.echo(f"extracted {len(pairs)} pairs from {len(corpus.transcripts)} transcripts -> {out / PAIRS_FILE}")
    for f in failures:
        click.echo(f"  failed {f.subject_id}: {f.error}", err=True)
    return 0


@cli.command()
@click.argument("pairs_path", type=click.Path(exists=True))
@config_option
@click.option("--eps", type=float, default=None, help="DBSCAN neighborhood radius.")
@click.option("--min-samples", type=int, default=None, help="DBSCAN core-point threshold.")
@out_option
def cluster(pairs_path, config_path, eps, min_samples, out_dir) -> int:
    """Stage 2: embed extracted pairs and cluster near-duplicate questions."""
    cfg = _load_cfg(config_path, eps=eps, min_samples=min_samples)
    pairs = read_pairs_file(pairs_path)
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    embedder = make_embedder(cfg.embedding)
    cache = EmbeddingCache(embedder, cfg.embedding.cache_path or out / EMBEDDINGS_FILE)
    embedded = embed_pairs(pairs, cache)
    if not embedded:
        raise EmptyCorpus("no pairs to cluster")
    result = _cluster_stage(embedded, cfg.clustering)
    write_clusters_file(result, out / CLUSTERS_FILE)
    noise = sum(1 for c in result.clusters if c.is_noise_singleton)
    click.echo(
        f"clustered {len(pairs)} pairs into {len(result.clusters)} clusters "
        f"({noise} noise singletons, silhouette="
        f"{'n/a' if result.silhouette is None else f'{result.silhouette:.4f}'}) -> {out / CLUSTERS_FILE}"
    )
    return 0


@cli.command()
@click.argument("clusters_path", type=click.Path(exists=True))
@click.argument("pairs_path", type=click.Path(exists=True))
@config_option
@provider_option
@out_option
def recommend(clusters_path, pairs_path, config_path, provider, out_dir) -> int:
    """Stage 3: pick representative QA pairs per cluster and drop near-duplicates."""
    cfg = _load_cfg(config_path, provider=provider)
    pairs = read_pairs_file(pairs_path)
    embedder = make_embedder(cfg.embedding)
    embedded = embed_pairs(pairs, embedder)
    records, _ = read_clusters_file(clusters_path)
    clusters = []
    for rec in records:
        members = tuple(embedded[i] for i in rec["member_indices"])
        clusters.append(
            Cluster(
                cluster_id=rec["cluster_id"],
                members=members,
                member_indices=tuple(rec["member_indices"]),
                is_noise_singleton=rec["is_noise_singleton"],
            )
        )
    reps, failures = recommend_stage(clusters, cfg, embedder)
    kept = dedup_filter(reps, cfg.max_similarity)
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_recommendations_file(kept, out / RECOMMENDATIONS_FILE)
    click.echo(
        f"recommended {len(kept)} representatives from {len(clusters)} clusters "
        f"({len(reps) - len(kept)} near-duplicates dropped) -> {out / RECOMMENDATIONS_FILE}"
    )
    for f in failures:
        click.echo(f"  failed {f.subject_id}: {f.error}", err=True)
    return 0


@cli.command()
@click.argument("corpus_path", type=click.Path(exists=True))
@config_option
@company_option
@from_option
@to_option
@provider_option
@out_option
def run(corpus_path, config_path, company, window_from, window_to, provider, out_dir) -> int:
    """Run all stages plus knowledge-store ingest; artifacts land under the run id."""
    cfg = _load_cfg(
        config_path,
        company=company,
        window_from=_parse_window(window_from, "--from"),
        window_to=_parse_window(window_to, "--to"),
        provider=provider,
        out_dir=out_dir,
    )
    corpus = build_corpus(load_transcripts(corpus_path), None, None, None)
    manifest = run_pipeline(corpus, cfg)
    click.echo(
        f"run {manifest.run_id}: {manifest.transcripts_processed} transcripts, "
        f"{manifest.pairs_extracted} pairs, {manifest.clusters_formed} clusters, "
        f"{manifest.representatives_recommended} recommended, "
        f"{len(manifest.failures)} failures -> {Path(cfg.out_dir) / manifest.run_id}"
    )
    return 0


@cli.command("eval")
@config_option
@click.option("--verdicts", "verdicts_path", type=click.Path(exists=True), default=None, help="Verdicts file (one record per subject).")
@click.option("--run", "run_dir", type=click.Path(exists=True), default=None, help="Run directory whose extracted pairs to judge.")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None, help="Corpus file backing the run (judge mode).")
@click.option("--references", "references_path", type=click.Path(exists=True), default=None, help="JSON object of subject id -> expected pair count.")
@click.option("--plan", "plan_path", type=click.Path(exists=True), default=None, help="Plant-plan file; expected counts derived from it.")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Write the metric reports to this file.")
def eval_cmd(config_path, verdicts_path, run_dir, corpus_path, references_path, plan_path, out_path) -> int:
    """Score judge verdicts into precision/recall/F1 reports with a per-company breakdown."""
    cfg = _load_cfg(config_path)
    references = None
    if references_path:
        with open(references_path, encoding="utf-8") as fh:
            references = {str(k): int(v) for k, v in json.load(fh).items()}
    elif plan_path:
        with open(plan_path, encoding="utf-8") as fh:
            plan = json.load(fh)
        references = {
            t["transcript_id"]: len(t["planted"]) + len(t["noise"])
            for t in plan["transcripts"]
        }

    if verdicts_path:
        report = run_eval(verdicts_path=verdicts_path, references=references)
    elif run_dir and corpus_path:
        corpus = build_corpus(load_transcripts(corpus_path), None, None, None)
        pairs = read_pairs_file(Path(run_dir) / PAIRS_FILE)
        by_transcript: dict[str, list] = {}
        for p in pairs:
            by_transcript.setdefault(p.source_transcript_id, []).append(p)
        report = run_eval(
            references=references,
            corpus=corpus,
            pairs_by_transcript=by_transcript,
            judge_cfg=cfg.judge,
        )
    else:
        raise click.UsageError("eval needs --verdicts, or --run together with --corpus")

    click.echo(report.table)
    if out_path:
        write_reports_file(report.by_company, out_path)
        click.echo(f"reports -> {out_path}")
    return 0


@cli.command("gen-corpus")
@click.option("--seed", type=int, required=True, help="RNG seed; same seed, same corpus.")
@click.option("--n-transcripts", type=int, default=100, show_default=True)
@click.option("--n-topics", type=int, default=12, show_default=True)
@click.option("--paraphrase-rate", type=float, default=0.5, show_default=True)
@click.option("--noise-rate", type=float, default=0.2, show_default=True)
@click.option("--companies", default="brightline", show_default=True, help="Comma-separated company ids, assigned round-robin.")
@click.option("--out", "out_dir", type=click.Path(), required=True, help="Directory for corpus.jsonl and plan.json.")
def gen_corpus(seed, n_transcripts, n_topics, paraphrase_rate, noise_rate, companies, out_dir) -> int:
    """Generate a deterministic synthetic corpus plus its ground-truth plant plan."""
    corpus, plan = generate_synthetic_corpus(
        seed=seed,
        n_transcripts=n_transcripts,
        n_topics=n_topics,
        paraphrase_rate=paraphrase_rate,
        noise_rate=noise_rate,
        companies=tuple(c.strip() for c in companies.split(",") if c.strip()),
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_transcripts(corpus.transcripts, out / "corpus.jsonl")
    write_plan_file(plan, out / "plan.json")
    click.echo(
        f"generated {n_transcripts} transcripts over {n_topics} topics "
        f"({plan.total_planted()} planted questions) -> {out}"
    )
    return 0


@cli.group()
def kb() -> None:
    """Knowledge-base maintenance commands."""


@kb.command("export")
@config_option
@company_option
@click.option("--all", "include_all", is_flag=True, help="Include non-active entries.")
@click.option("--out", "out_path", type=click.Path(), required=True, help="Entries file to write.")
def kb_export(config_path, company, include_all, out_path) -> int:
    """Export knowledge entries as line-delimited question/answer records."""
    cfg = _load_cfg(config_path)
    store = KnowledgeStore(cfg.store_dir, make_embedder(cfg.embedding), policy=cfg.policy)
    n = store.export_entries(out_path, company_id=company, active_only=not include_all)
    click.echo(f"exported {n} entries -> {out_path}")
    return 0


@cli.command()
@config_option
@click.option("--host", default=None, help="Bind address override.")
@click.option("--port", type=int, default=None, help="Port override.")
def serve(config_path, host, port) -> int:
    """Start the review API service."""
    import uvicorn

    from .api import create_app

    cfg = _load_cfg(config_path)
    app = create_app(cfg)
    uvicorn.run(app, host=host or cfg.serve.host, port=port or cfg.serve.port)
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    """Entry point with the documented exit-code contract."""
    try:
        result = cli.main(args=argv, standalone_mode=False)
        return int(result) if isinstance(result, int) else 0
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 2
    except click.ClickException as exc:
        exc.show()
        return 2
    except _RUNTIME_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
