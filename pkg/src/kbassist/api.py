"""Review service: queue, decisions, KB browsing, cluster context, run triggers.

Every endpoint requires a static bearer token that maps to a reviewer id;
the reviewer id is attached to each decision so the store journal records
who did what. All mutations funnel through the knowledge store's single
writer, and pipeline runs execute on a background thread with pollable
status, so no handler blocks on a long run.
"""

from __future__ import annotations

import threading
from dataclasses import replace
from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, Header, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .config import PipelineConfig
from .domain import DomainError, build_corpus, format_rfc3339, load_transcripts, parse_rfc3339
from .clustering import read_clusters_file
from .pipeline import (
    CLUSTERS_FILE,
    MANIFEST_FILE,
    PAIRS_FILE,
    RECOMMENDATIONS_FILE,
    _manifest_payload,
    derive_run_id,
    make_embedder,
    read_manifest,
    read_pairs_file,
    run_pipeline,
)
from .recommend import read_recommendations_file
from .store import (
    Decision,
    ItemStatus,
    EntryStatus,
    KnowledgeEntry,
    KnowledgeStore,
    NotPending,
    ReviewItem,
    UnknownItem,
)

__all__ = ["create_app"]

_MAX_PAGE_SIZE = 200


class DecisionBody(BaseModel):
    decision: str
    new_question: Optional[str] = None
    new_answer: Optional[str] = None


class RunBody(BaseModel):
    company: Optional[str] = None
    window_from: Optional[str] = Field(default=None, alias="from")
    window_to: Optional[str] = Field(default=None, alias="to")

    model_config = {"populate_by_name": True}


def _item_payload(item: ReviewItem) -> dict:
    rep = item.representative
    return {
        "item_id": item.item_id,
        "company_id": item.company_id,
        "kind": item.kind.value,
        "status": item.status.value,
        "question": rep.question,
        "answer": rep.answer,
        "type": rep.type.value,
        "explanation": rep.explanation,
        "cluster_id": rep.cluster_id,
        "related_entry_id": item.related_entry_id,
        "source_transcript_ids": list(item.source_transcript_ids),
        "created_at": format_rfc3339(item.created_at),
        "decided_by": item.decided_by,
        "decided_at": format_rfc3339(item.decided_at) if item.decided_at else None,
        "note": item.note,
        "content_hash": item.content_hash,
    }


def _entry_payload(entry: KnowledgeEntry) -> dict:
    return {
        "entry_id": entry.entry_id,
        "company_id": entry.company_id,
        "question": entry.question,
        "answer": entry.answer,
        "status": entry.status.value,
        "provenance_cluster_id": entry.provenance_cluster_id,
        "source_transcript_ids": list(entry.source_transcript_ids),
        "created_at": format_rfc3339(entry.created_at),
        "updated_at": format_rfc3339(entry.updated_at),
    }


def _page_bounds(page: int, page_size: int) -> tuple[int, int]:
    if page < 1 or page_size < 1 or page_size > _MAX_PAGE_SIZE:
        raise HTTPException(
            status_code=400,
            detail=f"InvalidPagination: page >= 1 and 1 <= page_size <= {_MAX_PAGE_SIZE}",
        )
    start = (page - 1) * page_size
    return start, start + page_size


def create_app(cfg: PipelineConfig, store: Optional[KnowledgeStore] = None) -> FastAPI:
    """Build the service around a config (and optionally a pre-opened store)."""
    if store is None:
        store = KnowledgeStore(cfg.store_dir, make_embedder(cfg.embedding), policy=cfg.policy)

    app = FastAPI(title="kbassist review API")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[cfg.serve.console_origin],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    token_to_reviewer = {token: reviewer for reviewer, token in cfg.serve.tokens.items()}
    runs_lock = threading.Lock()
    runs: dict[str, dict] = {}
    in_flight: set[tuple] = set()

    def reviewer_from(authorization: Optional[str] = Header(default=None)) -> str:
        if not authorization or not authorization.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        reviewer = token_to_reviewer.get(authorization[len("Bearer ") :])
        if reviewer is None:
            raise HTTPException(status_code=401, detail="unknown token")
        return reviewer

    @app.get("/api/review-items")
    def list_review_items(
        status: Optional[str] = None,
        company: Optional[str] = None,
        page: int = Query(default=1),
        page_size: int = Query(default=50),
        reviewer: str = Depends(reviewer_from),
    ) -> dict:
        status_filter = None
        if status is not None:
            try:
                status_filter = ItemStatus(status)
            except ValueError:
                raise HTTPException(status_code=400, detail=f"unknown status {status!r}")
        start, end = _page_bounds(page, page_size)
        items = store.list_review_items(company_id=company, status=status_filter)
        return {
            "items": [_item_payload(i) for i in items[start:end]],
            "page": page,
            "page_size": page_size,
            "total": len(items),
        }

    @app.post("/api/review-items/{item_id}/decision")
    def post_decision(
        item_id: str, body: DecisionBody, reviewer: str = Depends(reviewer_from)
    ) -> dict:
        try:
            decision = Decision(body.decision)
        except ValueError:
            raise HTTPException(status_code=400, detail=f"unknown decision {body.decision!r}")
        try:
            item = store.decide(
                item_id,
                decision,
                reviewer=reviewer,
                new_question=body.new_question,
                new_answer=body.new_answer,
            )
        except UnknownItem as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except NotPending as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        payload = _item_payload(item)
        payload["kb_entry_id"] = item.related_entry_id
        return payload

    @app.get("/api/kb/entries")
    def list_entries(
        company: str,
        status: Optional[str] = None,
        q: Optional[str] = None,
        page: int = Query(default=1),
        page_size: int = Query(default=50),
        reviewer: str = Depends(reviewer_from),
    ) -> dict:
        status_filter = None
        if status is not None:
            try:
                status_filter = EntryStatus(status)
            except ValueError:
                raise HTTPException(status_code=400, detail=f"unknown status {status!r}")
        start, end = _page_bounds(page, page_size)
        entries = store.query_entries(company, text_filter=q, status=status_filter)
        return {
            "entries": [_entry_payload(e) for e in entries[start:end]],
            "page": page,
            "page_size": page_size,
            "total": len(entries),
        }

    def _resolve_run_dir(run_id: Optional[str]) -> Path:
        out_root = Path(cfg.out_dir)
        if run_id:
            run_dir = out_root / run_id
            if not (run_dir / CLUSTERS_FILE).exists():
                raise HTTPException(status_code=404, detail=f"unknown run {run_id!r}")
            return run_dir
        with runs_lock:
            completed = [r for r in runs.values() if r["status"] == "completed"]
        if completed:
            return Path(completed[-1]["run_dir"])
        candidates = sorted(
            (p for p in out_root.glob("run-*") if (p / CLUSTERS_FILE).exists()),
            key=lambda p: p.stat().st_mtime,
        )
        if not candidates:
            raise HTTPException(status_code=404, detail="no run artifacts available")
        return candidates[-1]

    @app.get("/api/clusters/{cluster_id}")
    def get_cluster(
        cluster_id: str,
        run: Optional[str] = None,
        reviewer: str = Depends(reviewer_from),
    ) -> dict:
        run_dir = _resolve_run_dir(run)
        records, _ = read_clusters_file(run_dir / CLUSTERS_FILE)
        record = next((r for r in records if r["cluster_id"] == cluster_id), None)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown cluster {cluster_id!r}")
        pairs = read_pairs_file(run_dir / PAIRS_FILE)
        members = [
            {
                "pair_id": pairs[i].pair_id,
                "question": pairs[i].question,
                "answer": pairs[i].answer,
                "source_transcript_id": pairs[i].source_transcript_id,
            }
            for i in record["member_indices"]
        ]
        reps = [
            {
                "question": r.question,
                "answer": r.answer,
                "type": r.type.value,
                "explanation": r.explanation,
            }
            for r in read_recommendations_file(run_dir / RECOMMENDATIONS_FILE)
            if r.cluster_id == cluster_id
        ]
        return {
            "cluster_id": cluster_id,
            "run_id": run_dir.name,
            "is_noise_singleton": record["is_noise_singleton"],
            "members": members,
            "representatives": reps,
        }

    @app.post("/api/runs", status_code=202)
    def trigger_run(body: RunBody, reviewer: str = Depends(reviewer_from)) -> dict:
        if not cfg.serve.corpus_path:
            raise HTTPException(status_code=503, detail="no corpus configured for runs")
        try:
            window_from = parse_rfc3339(body.window_from) if body.window_from else None
            window_to = parse_rfc3339(body.window_to) if body.window_to else None
        except (ValueError, DomainError) as exc:
            raise HTTPException(status_code=400, detail=f"InvalidWindow: {exc}")
        if window_from and window_to and window_from > window_to:
            raise HTTPException(status_code=400, detail="InvalidWindow: from is after to")

        run_cfg = replace(
            cfg,
            company=body.company if body.company is not None else cfg.company,
            window_from=window_from,
            window_to=window_to,
        )
        try:
            corpus = build_corpus(
                load_transcripts(cfg.serve.corpus_path),
                run_cfg.company,
                window_from,
                window_to,
            )
        except OSError as exc:
            raise HTTPException(status_code=503, detail=f"corpus unreadable: {exc}")
        if not corpus.transcripts:
            raise HTTPException(
                status_code=400, detail="InvalidWindow: no transcripts in window"
            )

        key = (run_cfg.company, body.window_from, body.window_to)
        run_id = derive_run_id(corpus, run_cfg)
        with runs_lock:
            if key in in_flight:
                raise HTTPException(
                    status_code=409, detail="RunInFlight: identical run already running"
                )
            in_flight.add(key)
            runs[run_id] = {
                "run_id": run_id,
                "status": "running",
                "run_dir": str(Path(run_cfg.out_dir) / run_id),
            }

        def worker() -> None:
            try:
                manifest = run_pipeline(corpus, run_cfg, store=store)
                with runs_lock:
                    runs[run_id].update(
                        status="completed", manifest=_manifest_payload(manifest)
                    )
            except Exception as exc:  # recorded, surfaced via polling
                with runs_lock:
                    runs[run_id].update(status="failed", error=str(exc))
            finally:
                with runs_lock:
                    in_flight.discard(key)

        threading.Thread(target=worker, daemon=True).start()
        return {"run_id": run_id, "status": "running"}

    @app.get("/api/runs/{run_id}")
    def get_run(run_id: str, reviewer: str = Depends(reviewer_from)) -> dict:
        with runs_lock:
            record = runs.get(run_id)
            if record is not None:
                payload = {"run_id": run_id, "status": record["status"]}
                if "manifest" in record:
                    payload["manifest"] = record["manifest"]
                if "error" in record:
                    payload["error"] = record["error"]
                return payload
        run_dir = Path(cfg.out_dir) / run_id
        if (run_dir / MANIFEST_FILE).exists():
            return {
                "run_id": run_id,
                "status": "completed",
                "manifest": _manifest_payload(read_manifest(run_dir)),
            }
        raise HTTPException(status_code=404, detail=f"unknown run {run_id!r}")

    return app
