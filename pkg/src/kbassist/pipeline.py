"""End-to-end run orchestration: extract, embed, cluster, recommend, ingest.

A run is a pure function of (corpus, config) when providers are mocked: the
run id is derived from the inputs, every intermediate artifact is persisted
under it, and the canonical manifest contains no wall-clock data (stage
timings go to a sidecar file) so repeated runs produce byte-identical output.

Per-transcript extraction failures and per-cluster recommendation failures
are recorded in the manifest and never abort the run; only storage errors do.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .clustering import Cluster, ClusteringResult, dbscan, kmeans, Method, write_clusters_file
from .config import ConfigError, EmbeddingConfig, PipelineConfig
from .domain import Corpus, QAPair, Transcript, build_corpus, format_rfc3339
from .embedding import EmbeddingCache, EmbeddingProvider, HashedTrigramProvider, embed_pairs
from .evaluation import (
    MetricReport,
    MissingReference,
    aggregate_by_company,
    format_report_table,
    precision_recall_f1,
    read_verdicts_file,
)
from .errors import ProviderUnavailable
from .gateway import (
    JudgeVerdict,
    ProviderConfig,
    ReplyError,
    build_extraction_prompt,
    build_judge_prompt,
    complete,
    parse_extraction_response,
    parse_judge_response,
)
from .recommend import (
    RepresentativeQA,
    dedup_filter,
    select_representatives,
    write_recommendations_file,
)
from .store import KnowledgeStore, StorageFailure

__all__ = [
    "EmptyCorpus",
    "StageFailure",
    "RunManifest",
    "EvalReport",
    "make_embedder",
    "derive_run_id",
    "run_pipeline",
    "run_eval",
    "write_pairs_file",
    "read_pairs_file",
    "write_manifest",
    "read_manifest",
]

PAIRS_FILE = "pairs.jsonl"
EMBEDDINGS_FILE = "embeddings.bin"
CLUSTERS_FILE = "clusters.jsonl"
RECOMMENDATIONS_FILE = "recommendations.jsonl"
MANIFEST_FILE = "manifest.json"
TIMINGS_FILE = "timings.json"


class EmptyCorpus(ValueError):
    """Raised when a run is asked to process zero transcripts."""


@dataclass(frozen=True)
class StageFailure:
    stage: str
    subject_id: str
    error: str


@dataclass(frozen=True)
class RunManifest:
    """Per-stage counts and failures for one pipeline run.

    Timings are excluded from equality and from the canonical manifest file
    (they land in a sidecar) so that mock runs stay byte-for-byte
    reproducible.
    """

    run_id: str
    company_id: Optional[str]
    window_from: Optional[str]
    window_to: Optional[str]
    transcripts_processed: int
    pairs_extracted: int
    clusters_formed: int
    noise_singletons: int
    representatives_recommended: int
    representatives_deduped: int
    ingest: Mapping[str, int]
    failures: tuple[StageFailure, ...] = ()
    silhouette: Optional[float] = None
    timings: Mapping[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        counts = (
            self.transcripts_processed,
            self.pairs_extracted,
            self.clusters_formed,
            self.noise_singletons,
            self.representatives_recommended,
            self.representatives_deduped,
            *self.ingest.values(),
        )
        if any(c < 0 for c in counts):
            raise ValueError("manifest counts must be non-negative")
        if self.representatives_recommended > self.pairs_extracted:
            raise ValueError(
                "recommended representatives cannot exceed extracted pairs "
                f"({self.representatives_recommended} > {self.pairs_extracted})"
            )


def make_embedder(cfg: EmbeddingConfig) -> EmbeddingProvider:
    if cfg.provider != "hashed-trigram":
        raise ConfigError(f"unknown embedding provider {cfg.provider!r}")
    return HashedTrigramProvider(dimension=cfg.dimension, seed=cfg.seed)


def derive_run_id(corpus: Corpus, cfg: PipelineConfig) -> str:
    """Stable run id from the corpus membership and the knobs that shape output."""
    if cfg.run_id:
        return cfg.run_id
    h = hashlib.sha256()
    for t in corpus.transcripts:
        h.update(t.transcript_id.encode("utf-8"))
        h.update(b"\x1f")
    knobs = (
        cfg.completion.provider_id,
        cfg.clustering.method.value,
        f"{cfg.clustering.eps}",
        f"{cfg.clustering.min_samples}",
        f"{cfg.clustering.k}",
        f"{cfg.clustering.seed}",
        f"{cfg.max_similarity}",
        cfg.company or "",
        format_rfc3339(cfg.window_from) if cfg.window_from else "",
        format_rfc3339(cfg.window_to) if cfg.window_to else "",
    )
    h.update("|".join(knobs).encode("utf-8"))
    return f"run-{h.hexdigest()[:12]}"


def write_pairs_file(pairs: Sequence[QAPair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(
                json.dumps(
                    {
                        "question": p.question,
                        "answer": p.answer,
                        "justification": p.justification,
                        "source_transcript_id": p.source_transcript_id,
                        "pair_index": p.pair_index,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_pairs_file(path: str | Path) -> list[QAPair]:
    pairs: list[QAPair] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            pairs.append(
                QAPair(
                    question=rec["question"],
                    answer=rec["answer"],
                    justification=rec.get("justification", ""),
                    source_transcript_id=rec["source_transcript_id"],
                    pair_index=rec["pair_index"],
                )
            )
    return pairs


def _manifest_payload(m: RunManifest) -> dict:
    return {
        "run_id": m.run_id,
        "company_id": m.company_id,
        "window_from": m.window_from,
        "window_to": m.window_to,
        "transcripts_processed": m.transcripts_processed,
        "pairs_extracted": m.pairs_extracted,
        "clusters_formed": m.clusters_formed,
        "noise_singletons": m.noise_singletons,
        "representatives_recommended": m.representatives_recommended,
        "representatives_deduped": m.representatives_deduped,
        "ingest": dict(sorted(m.ingest.items())),
        "failures": [
            {"stage": f.stage, "subject_id": f.subject_id, "error": f.error}
            for f in m.failures
        ],
        "silhouette": m.silhouette,
    }


def write_manifest(m: RunManifest, run_dir: str | Path) -> None:
    run_dir = Path(run_dir)
    with open(run_dir / MANIFEST_FILE, "w", encoding="utf-8") as fh:
        json.dump(_manifest_payload(m), fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")
    with open(run_dir / TIMINGS_FILE, "w", encoding="utf-8") as fh:
        json.dump(dict(m.timings), fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_manifest(run_dir: str | Path) -> RunManifest:
    with open(Path(run_dir) / MANIFEST_FILE, encoding="utf-8") as fh:
        rec = json.load(fh)
    timings: dict[str, float] = {}
    timings_path = Path(run_dir) / TIMINGS_FILE
    if timings_path.exists():
        with open(timings_path, encoding="utf-8") as fh:
            timings = json.load(fh)
    return RunManifest(
        run_id=rec["run_id"],
        company_id=rec.get("company_id"),
        window_from=rec.get("window_from"),
        window_to=rec.get("window_to"),
        transcripts_processed=rec["transcripts_processed"],
        pairs_extracted=rec["pairs_extracted"],
        clusters_formed=rec["clusters_formed"],
        noise_singletons=rec["noise_singletons"],
        representatives_recommended=rec["representatives_recommended"],
        representatives_deduped=rec["representatives_deduped"],
        ingest=rec.get("ingest", {}),
        failures=tuple(
            StageFailure(f["stage"], f["subject_id"], f["error"])
            for f in rec.get("failures", ())
        ),
        silhouette=rec.get("silhouette"),
        timings=timings,
    )


def _extract_one(transcript: Transcript, cfg: ProviderConfig) -> list[QAPair]:
    prompt = build_extraction_prompt(transcript, max_input_tokens=cfg.max_input_tokens)
    reply = complete(prompt, cfg)
    return parse_extraction_response(reply, transcript.transcript_id)


def extract_stage(
    corpus: Corpus, cfg: PipelineConfig
) -> tuple[list[QAPair], list[StageFailure]]:
    """Fan extraction out over transcripts; a failed transcript yields no pairs."""
    failures: list[StageFailure] = []
    pairs: list[QAPair] = []
    with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
        futures = [
            pool.submit(_extract_one, t, cfg.completion) for t in corpus.transcripts
        ]
        for transcript, fut in zip(corpus.transcripts, futures):
            try:
                pairs.extend(fut.result())
            except (ReplyError, ProviderUnavailable, ValueError) as exc:
                failures.append(
                    StageFailure("extract", transcript.transcript_id, str(exc))
                )
    return pairs, failures


def _cluster_stage(embedded, params) -> ClusteringResult:
    if params.method is Method.KMEANS:
        return kmeans(embedded, params)
    return dbscan(embedded, params)


def recommend_stage(
    clusters: Sequence[Cluster],
    cfg: PipelineConfig,
    embedder: EmbeddingProvider,
) -> tuple[list[RepresentativeQA], list[StageFailure]]:
    """Fan representative selection out over clusters, largest clusters first.

    The ordering matters downstream: the dedup filter keeps the first of any
    near-duplicate pair, so the representative backed by more transcripts
    survives.
    """
    ordered = sorted(clusters, key=lambda c: (-len(c.members), c.cluster_id))
    failures: list[StageFailure] = []
    reps: list[RepresentativeQA] = []
    with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
        futures = [
            pool.submit(select_representatives, c, cfg.completion, embedder)
            for c in ordered
        ]
        for cluster, fut in zip(ordered, futures):
            try:
                reps.extend(fut.result())
            except (ReplyError, ProviderUnavailable, ValueError) as exc:
                failures.append(StageFailure("recommend", cluster.cluster_id, str(exc)))
    return reps, failures


def run_pipeline(
    corpus: Corpus,
    cfg: PipelineConfig,
    store: Optional[KnowledgeStore] = None,
    out_root: Optional[str | Path] = None,
) -> RunManifest:
    """Execute all three stages plus ingest, persisting artifacts per stage.

    The corpus is filtered by the config's company/window before anything
    runs. When no store is supplied one is opened at cfg.store_dir.
    """
    filtered = build_corpus(
        corpus.transcripts, cfg.company, cfg.window_from, cfg.window_to
    )
    if not filtered.transcripts:
        raise EmptyCorpus("no transcripts to process after filtering")

    embedder = make_embedder(cfg.embedding)
    if store is None:
        store = KnowledgeStore(cfg.store_dir, embedder, policy=cfg.policy)

    run_id = derive_run_id(filtered, cfg)
    run_dir = Path(out_root if out_root is not None else cfg.out_dir) / run_id
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StorageFailure(f"cannot create run directory {run_dir}: {exc}") from exc

    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    pairs, failures = extract_stage(filtered, cfg)
    timings["extract"] = time.perf_counter() - t0
    write_pairs_file(pairs, run_dir / PAIRS_FILE)

    t0 = time.perf_counter()
    cache = EmbeddingCache(embedder, run_dir / EMBEDDINGS_FILE)
    embedded = embed_pairs(pairs, cache)
    timings["embed"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if embedded:
        result = _cluster_stage(embedded, cfg.clustering)
    else:
        result = ClusteringResult(
            clusters=(), labels=(), params=cfg.clustering, silhouette=None
        )
    timings["cluster"] = time.perf_counter() - t0
    write_clusters_file(result, run_dir / CLUSTERS_FILE)

    t0 = time.perf_counter()
    reps, rec_failures = recommend_stage(result.clusters, cfg, embedder)
    failures.extend(rec_failures)
    kept = dedup_filter(reps, cfg.max_similarity)
    timings["recommend"] = time.perf_counter() - t0
    write_recommendations_file(kept, run_dir / RECOMMENDATIONS_FILE)

    t0 = time.perf_counter()
    company_of = {t.transcript_id: t.company_id for t in filtered.transcripts}
    pair_transcript = {p.pair.pair_id: p.pair.source_transcript_id for p in embedded}
    cluster_company: dict[str, str] = {}
    provenance: dict[str, list[str]] = {}
    for cluster in result.clusters:
        tids = sorted({m.pair.source_transcript_id for m in cluster.members})
        provenance[cluster.cluster_id] = tids
        if tids:
            cluster_company[cluster.cluster_id] = company_of[tids[0]]

    by_company: dict[str, list[RepresentativeQA]] = {}
    for rep in kept:
        company = cfg.company or cluster_company.get(rep.cluster_id, "")
        by_company.setdefault(company, []).append(rep)
    ingest_totals = {
        "inserted": 0,
        "review_new": 0,
        "review_obsolete": 0,
        "dropped_consistent": 0,
        "coalesced": 0,
    }
    for company in sorted(by_company):
        report = store.ingest_recommendations(
            by_company[company], company, policy=cfg.policy, provenance=provenance
        )
        ingest_totals["inserted"] += report.inserted
        ingest_totals["review_new"] += report.review_new
        ingest_totals["review_obsolete"] += report.review_obsolete
        ingest_totals["dropped_consistent"] += report.dropped_consistent
        ingest_totals["coalesced"] += report.coalesced
    timings["ingest"] = time.perf_counter() - t0

    manifest = RunManifest(
        run_id=run_id,
        company_id=cfg.company,
        window_from=format_rfc3339(cfg.window_from) if cfg.window_from else None,
        window_to=format_rfc3339(cfg.window_to) if cfg.window_to else None,
        transcripts_processed=len(filtered.transcripts),
        pairs_extracted=len(pairs),
        clusters_formed=len(result.clusters),
        noise_singletons=sum(1 for c in result.clusters if c.is_noise_singleton),
        representatives_recommended=len(kept),
        representatives_deduped=len(reps) - len(kept),
        ingest=ingest_totals,
        failures=tuple(failures),
        silhouette=result.silhouette,
        timings=timings,
    )
    write_manifest(manifest, run_dir)
    return manifest


@dataclass(frozen=True)
class EvalReport:
    overall: MetricReport
    by_company: tuple[MetricReport, ...]
    table: str


def judge_extractions(
    corpus: Corpus,
    pairs_by_transcript: Mapping[str, Sequence[QAPair]],
    judge_cfg: ProviderConfig,
) -> list[JudgeVerdict]:
    """Prompt the judge once per transcript over its extracted pairs."""
    verdicts: list[JudgeVerdict] = []
    for t in corpus.transcripts:
        pairs = list(pairs_by_transcript.get(t.transcript_id, ()))
        if not pairs:
            verdicts.append(
                JudgeVerdict(0, 0, "no pairs extracted", subject_id=t.transcript_id)
            )
            continue
        prompt = build_judge_prompt(t, pairs, max_input_tokens=judge_cfg.max_input_tokens)
        reply = complete(prompt, judge_cfg)
        verdicts.append(parse_judge_response(reply, t.transcript_id))
    return verdicts


def run_eval(
    verdicts: Optional[Sequence[JudgeVerdict]] = None,
    references: Optional[Mapping[str, int]] = None,
    company_map: Optional[Mapping[str, str]] = None,
    *,
    verdicts_path: Optional[str | Path] = None,
    corpus: Optional[Corpus] = None,
    pairs_by_transcript: Optional[Mapping[str, Sequence[QAPair]]] = None,
    judge_cfg: Optional[ProviderConfig] = None,
) -> EvalReport:
    """Compute Table-shaped metric reports from verdicts.

    Verdicts come from (in precedence order) the explicit sequence, a
    verdicts file, or a judge-prompting pass over a corpus and its extracted
    pairs. References are per-subject expected pair counts; the file form
    carries them inline.
    """
    if verdicts is None and verdicts_path is not None:
        file_verdicts, file_refs, file_companies = read_verdicts_file(verdicts_path)
        verdicts = file_verdicts
        references = references if references is not None else file_refs
        company_map = company_map if company_map is not None else file_companies
    elif verdicts is None:
        if corpus is None or pairs_by_transcript is None or judge_cfg is None:
            raise MissingReference(
                "run_eval needs verdicts, a verdicts file, or a corpus plus "
                "extracted pairs and a judge provider"
            )
        verdicts = judge_extractions(corpus, pairs_by_transcript, judge_cfg)
        if company_map is None:
            company_map = {t.transcript_id: t.company_id for t in corpus.transcripts}

    if not verdicts:
        raise MissingReference("no verdicts to evaluate")
    if references is None:
        raise MissingReference("no reference counts supplied")

    overall = precision_recall_f1(verdicts, references, group_id="overall")
    if company_map:
        reports = aggregate_by_company(verdicts, references, company_map)
    else:
        reports = [overall]
    return EvalReport(
        overall=overall,
        by_company=tuple(reports),
        table=format_report_table(reports),
    )
