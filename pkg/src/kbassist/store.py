"""Persistent knowledge base with a review queue and self-update checks.

New representatives are screened against the existing base: an unfamiliar
question is new knowledge, a familiar question with a drifted answer flags the
stored answer as possibly obsolete. Either outcome lands in a review queue by
default (auto-insert is opt-in).

Persistence is an append-only journal of typed records plus optional
snapshots; state is always snapshot + replay. Every mutation builds journal
records first and a single commit path both writes and applies them, so a
rebuild from disk reproduces live state by construction.
"""
from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from .domain import format_rfc3339, parse_rfc3339
from .embedding import EmbeddingProvider, EmbeddingVector, cosine_similarity
from .recommend import RepresentativeQA, RepresentativeType

JOURNAL_VERSION = 1
SNAPSHOT_VERSION = 1


class StoreError(Exception):
    pass


class StorageFailure(StoreError):
    pass


class NotPending(StoreError):
    pass


class UnknownItem(StoreError):
    pass


class EntryStatus(str, Enum):
    ACTIVE = "Active"
    OBSOLETE = "Obsolete"


class ItemKind(str, Enum):
    NEW_KNOWLEDGE = "NewKnowledge"
    POSSIBLY_OBSOLETE = "PossiblyObsoleteAnswer"


class ItemStatus(str, Enum):
    PENDING = "Pending"
    APPROVED = "Approved"
    REJECTED = "Rejected"
    EDITED = "Edited"


class Decision(str, Enum):
    APPROVE = "approve"
    REJECT = "reject"
    EDIT = "edit"


class ObsolescenceFlag(str, Enum):
    CONSISTENT = "Consistent"
    POSSIBLY_OBSOLETE = "PossiblyObsolete"


@dataclass(frozen=True)
class UpdatePolicy:
    tau_new: float = 0.85
    tau_obsolete: float = 0.70
    auto_insert: bool = False

    def __post_init__(self) -> None:
        if not (0.0 <= self.tau_new <= 1.0) or not (0.0 <= self.tau_obsolete <= 1.0):
            raise ValueError("thresholds must lie in [0, 1]")


@dataclass(frozen=True)
class KnowledgeEntry:
    entry_id: str
    question: str
    answer: str
    question_embedding: EmbeddingVector
    answer_embedding: EmbeddingVector
    company_id: str
    status: EntryStatus
    provenance_cluster_id: str
    source_transcript_ids: tuple[str, ...]
    created_at: datetime
    updated_at: datetime


@dataclass(frozen=True)
class ReviewItem:
    item_id: str
    representative: RepresentativeQA
    company_id: str
    kind: ItemKind
    related_entry_id: Optional[str]
    status: ItemStatus
    created_at: datetime
    content_hash: str
    decided_by: Optional[str] = None
    decided_at: Optional[datetime] = None
    note: str = ""
    # provenance carried from ingest so an approval can stamp it on the entry
    source_transcript_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class NoveltyResult:
    kind: str  # "New" or "Duplicate"
    entry: Optional[KnowledgeEntry]
    similarity: float


@dataclass(frozen=True)
class IngestReport:
    inserted: int = 0
    review_new: int = 0
    review_obsolete: int = 0
    dropped_consistent: int = 0
    coalesced: int = 0
    outcomes: tuple[dict, ...] = ()


def _content_hash(kind: ItemKind, company_id: str, question: str, answer: str, related: str) -> str:
    payload = "\x1f".join([kind.value, company_id, question, answer, related])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def _vector_record(v: EmbeddingVector) -> dict:
    return {"model_id": v.model_id, "values": list(v.values)}


def _vector_from(rec: dict) -> EmbeddingVector:
    return EmbeddingVector(values=tuple(rec["values"]), model_id=rec["model_id"])


def _entry_record(e: KnowledgeEntry) -> dict:
    return {
        "entry_id": e.entry_id,
        "question": e.question,
        "answer": e.answer,
        "question_embedding": _vector_record(e.question_embedding),
        "answer_embedding": _vector_record(e.answer_embedding),
        "company_id": e.company_id,
        "status": e.status.value,
        "provenance_cluster_id": e.provenance_cluster_id,
        "source_transcript_ids": list(e.source_transcript_ids),
        "created_at": format_rfc3339(e.created_at),
        "updated_at": format_rfc3339(e.updated_at),
    }


def _entry_from(rec: dict) -> KnowledgeEntry:
    return KnowledgeEntry(
        entry_id=rec["entry_id"],
        question=rec["question"],
        answer=rec["answer"],
        question_embedding=_vector_from(rec["question_embedding"]),
        answer_embedding=_vector_from(rec["answer_embedding"]),
        company_id=rec["company_id"],
        status=EntryStatus(rec["status"]),
        provenance_cluster_id=rec["provenance_cluster_id"],
        source_transcript_ids=tuple(rec["source_transcript_ids"]),
        created_at=parse_rfc3339(rec["created_at"]),
        updated_at=parse_rfc3339(rec["updated_at"]),
    )


def _item_record(i: ReviewItem) -> dict:
    rep = i.representative
    return {
        "item_id": i.item_id,
        "representative": {
            "question": rep.question,
            "answer": rep.answer,
            "type": rep.type.value,
            "explanation": rep.explanation,
            "cluster_id": rep.cluster_id,
            "source_pair_indices": list(rep.source_pair_indices),
        },
        "company_id": i.company_id,
        "kind": i.kind.value,
        "related_entry_id": i.related_entry_id,
        "status": i.status.value,
        "created_at": format_rfc3339(i.created_at),
        "content_hash": i.content_hash,
        "decided_by": i.decided_by,
        "decided_at": format_rfc3339(i.decided_at) if i.decided_at else None,
        "note": i.note,
        "source_transcript_ids": list(i.source_transcript_ids),
    }


def _item_from(rec: dict) -> ReviewItem:
    rep = rec["representative"]
    return ReviewItem(
        item_id=rec["item_id"],
        representative=RepresentativeQA(
            question=rep["question"],
            answer=rep["answer"],
            type=RepresentativeType(rep["type"]),
            explanation=rep["explanation"],
            cluster_id=rep["cluster_id"],
            source_pair_indices=tuple(rep["source_pair_indices"]),
        ),
        company_id=rec["company_id"],
        kind=ItemKind(rec["kind"]),
        related_entry_id=rec["related_entry_id"],
        status=ItemStatus(rec["status"]),
        created_at=parse_rfc3339(rec["created_at"]),
        content_hash=rec["content_hash"],
        decided_by=rec["decided_by"],
        decided_at=parse_rfc3339(rec["decided_at"]) if rec["decided_at"] else None,
        note=rec.get("note", ""),
        source_transcript_ids=tuple(rec.get("source_transcript_ids", ())),
    )


class _State:
    """In-memory store state; mutated only by _apply_record."""

    def __init__(self) -> None:
        self.entries: dict[str, KnowledgeEntry] = {}
        self.items: dict[str, ReviewItem] = {}
        self.entry_seq = 0
        self.item_seq = 0

    def copy(self) -> "_State":
        out = _State()
        out.entries = dict(self.entries)
        out.items = dict(self.items)
        out.entry_seq = self.entry_seq
        out.item_seq = self.item_seq
        return out


def _apply_record(state: _State, record: dict) -> None:
    kind = record["type"]
    if kind == "EntryInserted":
        entry = _entry_from(record["entry"])
        state.entries[entry.entry_id] = entry
        state.entry_seq = max(state.entry_seq, int(entry.entry_id[1:]) + 1)
    elif kind == "AnswerReplaced":
        entry = state.entries[record["entry_id"]]
        state.entries[entry.entry_id] = replace(
            entry,
            answer=record["answer"],
            answer_embedding=_vector_from(record["answer_embedding"]),
            updated_at=parse_rfc3339(record["updated_at"]),
        )
    elif kind == "ItemCreated":
        item = _item_from(record["item"])
        state.items[item.item_id] = item
        state.item_seq = max(state.item_seq, int(item.item_id[2:]) + 1)
    elif kind == "ItemDecided":
        item = state.items[record["item_id"]]
        state.items[item.item_id] = replace(
            item,
            status=ItemStatus(record["status"]),
            decided_by=record["reviewer"],
            decided_at=parse_rfc3339(record["decided_at"]),
            note=record.get("note", ""),
            related_entry_id=record.get("related_entry_id", item.related_entry_id),
        )
    else:
        raise StorageFailure(f"unknown journal record type {kind!r}")


class KnowledgeStore:
    """Single-writer knowledge base rooted at a directory.

    Files: journal.jsonl (header line then one typed record per line) and
    snapshot.json (full state plus the count of journal records it covers).
    """

    def __init__(
        self,
        root: str | Path,
        embedder: EmbeddingProvider,
        policy: Optional[UpdatePolicy] = None,
        clock: Optional[Callable[[], datetime]] = None,
    ):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.journal_path = self.root / "journal.jsonl"
        self.snapshot_path = self.root / "snapshot.json"
        self.embedder = embedder
        self.policy = policy or UpdatePolicy()
        self._clock = clock or (lambda: datetime.now(timezone.utc))
        self._lock = threading.RLock()
        self._state = _State()
        self._records_applied = 0
        self._load()

    # -- persistence ---------------------------------------------------------

    def _load(self) -> None:
        skip = 0
        if self.snapshot_path.exists():
            snap = json.loads(self.snapshot_path.read_text(encoding="utf-8"))
            if snap.get("version") != SNAPSHOT_VERSION:
                raise StorageFailure(f"unsupported snapshot version {snap.get('version')}")
            for rec in snap["entries"]:
                entry = _entry_from(rec)
                self._state.entries[entry.entry_id] = entry
            for rec in snap["items"]:
                item = _item_from(rec)
                self._state.items[item.item_id] = item
            self._state.entry_seq = snap["entry_seq"]
            self._state.item_seq = snap["item_seq"]
            skip = snap["records_applied"]
        self._records_applied = skip
        if not self.journal_path.exists():
            return
        seen = 0
        with open(self.journal_path, encoding="utf-8") as fh:
            header = fh.readline()
            if header:
                meta = json.loads(header)
                if meta.get("version") != JOURNAL_VERSION:
                    raise StorageFailure(f"unsupported journal version {meta.get('version')}")
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                seen += 1
                if seen <= skip:
                    continue
                _apply_record(self._state, json.loads(line))
                self._records_applied += 1

    def _commit(self, records: list[dict], staged: _State) -> None:
        if not records:
            self._state = staged
            return
        try:
            new_file = not self.journal_path.exists() or self.journal_path.stat().st_size == 0
            with open(self.journal_path, "a", encoding="utf-8") as fh:
                if new_file:
                    fh.write(
                        json.dumps({"journal": "kbassist-store", "version": JOURNAL_VERSION})
                        + "\n"
                    )
                for record in records:
                    fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        except OSError as exc:
            raise StorageFailure(f"journal append failed: {exc}") from exc
        self._state = staged
        self._records_applied += len(records)

    def write_snapshot(self) -> None:
        """Dump full state; later loads replay only journal records beyond it."""
        with self._lock:
            snap = {
                "version": SNAPSHOT_VERSION,
                "records_applied": self._records_applied,
                "entry_seq": self._state.entry_seq,
                "item_seq": self._state.item_seq,
                "entries": [_entry_record(e) for e in self._state.entries.values()],
                "items": [_item_record(i) for i in self._state.items.values()],
            }
            tmp = self.snapshot_path.with_suffix(".json.tmp")
            try:
                tmp.write_text(json.dumps(snap, ensure_ascii=False), encoding="utf-8")
                tmp.replace(self.snapshot_path)
            except OSError as exc:
                raise StorageFailure(f"snapshot write failed: {exc}") from exc

    # -- self-update checks --------------------------------------------------

    def _novelty(
        self,
        rep: RepresentativeQA,
        company_id: str,
        policy: UpdatePolicy,
        entries: Mapping[str, KnowledgeEntry],
    ) -> NoveltyResult:
        q_emb = rep.question_embedding or self.embedder.embed(rep.question)
        best: Optional[KnowledgeEntry] = None
        best_sim = -1.0
        for entry in entries.values():
            if entry.company_id != company_id or entry.status is not EntryStatus.ACTIVE:
                continue
            sim = cosine_similarity(q_emb, entry.question_embedding)
            if sim > best_sim:
                best_sim, best = sim, entry
        if best is None or best_sim < policy.tau_new:
            return NoveltyResult(kind="New", entry=None, similarity=max(best_sim, 0.0))
        return NoveltyResult(kind="Duplicate", entry=best, similarity=best_sim)

    def novelty_check(
        self, rep: RepresentativeQA, company_id: str, policy: Optional[UpdatePolicy] = None
    ) -> NoveltyResult:
        """New iff the max question similarity over Active same-company entries
        is below tau_new (vacuously New on an empty base)."""
        with self._lock:
            return self._novelty(rep, company_id, policy or self.policy, self._state.entries)

    def obsolescence_check(
        self,
        rep: RepresentativeQA,
        matched_entry: KnowledgeEntry,
        policy: Optional[UpdatePolicy] = None,
    ) -> ObsolescenceFlag:
        """PossiblyObsolete iff answer similarity is strictly below tau_obsolete."""
        policy = policy or self.policy
        sim = cosine_similarity(self.embedder.embed(rep.answer), matched_entry.answer_embedding)
        if sim < policy.tau_obsolete:
            return ObsolescenceFlag.POSSIBLY_OBSOLETE
        return ObsolescenceFlag.CONSISTENT

    # -- mutations -----------------------------------------------------------

    def _make_entry(
        self,
        staged: _State,
        question: str,
        answer: str,
        company_id: str,
        cluster_id: str,
        transcript_ids: Sequence[str],
        now: datetime,
    ) -> KnowledgeEntry:
        entry = KnowledgeEntry(
            entry_id=f"e{staged.entry_seq:06d}",
            question=question,
            answer=answer,
            question_embedding=self.embedder.embed(question),
            answer_embedding=self.embedder.embed(answer),
            company_id=company_id,
            status=EntryStatus.ACTIVE,
            provenance_cluster_id=cluster_id,
            source_transcript_ids=tuple(transcript_ids),
            created_at=now,
            updated_at=now,
        )
        return entry

    def ingest_recommendations(
        self,
        reps: Sequence[RepresentativeQA],
        company_id: str,
        policy: Optional[UpdatePolicy] = None,
        provenance: Optional[Mapping[str, Sequence[str]]] = None,
    ) -> IngestReport:
        """Screen a batch of representatives and insert/queue/drop each one.

        The whole batch commits atomically: either every resulting journal
        record lands or none does. Effects are visible within the batch, so
        two identical novel reps in one batch yield one entry or one item.
        provenance maps cluster_id to the transcript ids behind it.
        """
        policy = policy or self.policy
        provenance = provenance or {}
        with self._lock:
            staged = self._state.copy()
            records: list[dict] = []
            now = self._clock()
            tallies = {
                "inserted": 0,
                "review_new": 0,
                "review_obsolete": 0,
                "dropped_consistent": 0,
                "coalesced": 0,
            }
            outcomes: list[dict] = []

            def queue_item(
                rep: RepresentativeQA, kind: ItemKind, related: Optional[str]
            ) -> Optional[ReviewItem]:
                digest = _content_hash(kind, company_id, rep.question, rep.answer, related or "")
                for existing in staged.items.values():
                    if existing.content_hash == digest and existing.status is ItemStatus.PENDING:
                        return None
                item = ReviewItem(
                    item_id=f"ri{staged.item_seq:06d}",
                    representative=replace(rep, question_embedding=None),
                    company_id=company_id,
                    kind=kind,
                    related_entry_id=related,
                    status=ItemStatus.PENDING,
                    created_at=now,
                    content_hash=digest,
                    source_transcript_ids=tuple(provenance.get(rep.cluster_id, ())),
                )
                return item

            for rep in reps:
                novelty = self._novelty(rep, company_id, policy, staged.entries)
                if novelty.kind == "New":
                    if policy.auto_insert:
                        entry = self._make_entry(
                            staged,
                            rep.question,
                            rep.answer,
                            company_id,
                            rep.cluster_id,
                            provenance.get(rep.cluster_id, ()),
                            now,
                        )
                        record = {"type": "EntryInserted", "entry": _entry_record(entry)}
                        records.append(record)
                        _apply_record(staged, record)
                        tallies["inserted"] += 1
                        outcomes.append(
                            {"question": rep.question, "outcome": "inserted", "entry_id": entry.entry_id}
                        )
                    else:
                        item = queue_item(rep, ItemKind.NEW_KNOWLEDGE, None)
                        if item is None:
                            tallies["coalesced"] += 1
                            outcomes.append({"question": rep.question, "outcome": "coalesced"})
                        else:
                            record = {"type": "ItemCreated", "item": _item_record(item)}
                            records.append(record)
                            _apply_record(staged, record)
                            tallies["review_new"] += 1
                            outcomes.append(
                                {"question": rep.question, "outcome": "review_new", "item_id": item.item_id}
                            )
                    continue
                entry = novelty.entry
                assert entry is not None
                flag = self.obsolescence_check(rep, entry, policy)
                if flag is ObsolescenceFlag.CONSISTENT:
                    tallies["dropped_consistent"] += 1
                    outcomes.append(
                        {
                            "question": rep.question,
                            "outcome": "dropped_consistent",
                            "entry_id": entry.entry_id,
                            "reason": f"duplicate of {entry.entry_id} with consistent answer",
                        }
                    )
                    continue
                item = queue_item(rep, ItemKind.POSSIBLY_OBSOLETE, entry.entry_id)
                if item is None:
                    tallies["coalesced"] += 1
                    outcomes.append({"question": rep.question, "outcome": "coalesced"})
                else:
                    record = {"type": "ItemCreated", "item": _item_record(item)}
                    records.append(record)
                    _apply_record(staged, record)
                    tallies["review_obsolete"] += 1
                    outcomes.append(
                        {
                            "question": rep.question,
                            "outcome": "review_obsolete",
                            "item_id": item.item_id,
                            "entry_id": entry.entry_id,
                        }
                    )

            self._commit(records, staged)
            return IngestReport(outcomes=tuple(outcomes), **tallies)

    def decide(
        self,
        item_id: str,
        decision: Decision,
        reviewer: str,
        new_question: Optional[str] = None,
        new_answer: Optional[str] = None,
    ) -> ReviewItem:
        """Apply a reviewer decision to a Pending item.

        Approve on NewKnowledge re-checks novelty first (a duplicate that
        raced in converts the decision to a recorded rejection). Approve on
        PossiblyObsoleteAnswer replaces the related entry's answer. Edit
        substitutes the reviewer's text, then follows the Approve path; for
        obsolete-answer items only the answer text applies.
        """
        with self._lock:
            item = self._state.items.get(item_id)
            if item is None:
                raise UnknownItem(f"no review item {item_id!r}")
            if item.status is not ItemStatus.PENDING:
                raise NotPending(f"item {item_id} already {item.status.value}")
            now = self._clock()
            staged = self._state.copy()
            records: list[dict] = []
            final_status = ItemStatus.APPROVED if decision is Decision.APPROVE else ItemStatus.EDITED

            if decision is Decision.REJECT:
                records.append(
                    {
                        "type": "ItemDecided",
                        "item_id": item_id,
                        "status": ItemStatus.REJECTED.value,
                        "reviewer": reviewer,
                        "decided_at": format_rfc3339(now),
                    }
                )
            elif item.kind is ItemKind.NEW_KNOWLEDGE:
                question = new_question if decision is Decision.EDIT and new_question else item.representative.question
                answer = new_answer if decision is Decision.EDIT and new_answer else item.representative.answer
                probe = replace(
                    item.representative,
                    question=question,
                    answer=answer,
                    question_embedding=None,
                )
                novelty = self._novelty(probe, item.company_id, self.policy, staged.entries)
                if novelty.kind == "Duplicate":
                    records.append(
                        {
                            "type": "ItemDecided",
                            "item_id": item_id,
                            "status": ItemStatus.REJECTED.value,
                            "reviewer": reviewer,
                            "decided_at": format_rfc3339(now),
                            "note": f"converted to reject: duplicate of {novelty.entry.entry_id}",
                            "related_entry_id": novelty.entry.entry_id,
                        }
                    )
                else:
                    entry = self._make_entry(
                        staged,
                        question,
                        answer,
                        item.company_id,
                        item.representative.cluster_id,
                        item.source_transcript_ids,
                        now,
                    )
                    records.append({"type": "EntryInserted", "entry": _entry_record(entry)})
                    records.append(
                        {
                            "type": "ItemDecided",
                            "item_id": item_id,
                            "status": final_status.value,
                            "reviewer": reviewer,
                            "decided_at": format_rfc3339(now),
                            "note": f"inserted {entry.entry_id}",
                            "related_entry_id": entry.entry_id,
                        }
                    )
            else:
                related = staged.entries.get(item.related_entry_id or "")
                if related is None:
                    raise StorageFailure(
                        f"item {item_id} references missing entry {item.related_entry_id!r}"
                    )
                answer = new_answer if decision is Decision.EDIT and new_answer else item.representative.answer
                records.append(
                    {
                        "type": "AnswerReplaced",
                        "entry_id": related.entry_id,
                        "answer": answer,
                        "answer_embedding": _vector_record(self.embedder.embed(answer)),
                        "updated_at": format_rfc3339(now),
                    }
                )
                records.append(
                    {
                        "type": "ItemDecided",
                        "item_id": item_id,
                        "status": final_status.value,
                        "reviewer": reviewer,
                        "decided_at": format_rfc3339(now),
                        "note": f"replaced answer of {related.entry_id}",
                    }
                )
            for record in records:
                _apply_record(staged, record)
            self._commit(records, staged)
            return self._state.items[item_id]

    # -- queries -------------------------------------------------------------

    def query_entries(
        self,
        company_id: str,
        text_filter: Optional[str] = None,
        status: Optional[EntryStatus] = None,
    ) -> list[KnowledgeEntry]:
        """Matching entries, newest first."""
        with self._lock:
            entries = [
                e for e in self._state.entries.values() if e.company_id == company_id
            ]
        if status is not None:
            entries = [e for e in entries if e.status is status]
        if text_filter:
            needle = text_filter.lower()
            entries = [
                e
                for e in entries
                if needle in e.question.lower() or needle in e.answer.lower()
            ]
        return sorted(entries, key=lambda e: (e.created_at, e.entry_id), reverse=True)

    def list_review_items(
        self,
        company_id: Optional[str] = None,
        status: Optional[ItemStatus] = None,
    ) -> list[ReviewItem]:
        """Review items in stable created-time order."""
        with self._lock:
            items = list(self._state.items.values())
        if company_id is not None:
            items = [i for i in items if i.company_id == company_id]
        if status is not None:
            items = [i for i in items if i.status is status]
        return sorted(items, key=lambda i: (i.created_at, i.item_id))

    def get_item(self, item_id: str) -> Optional[ReviewItem]:
        with self._lock:
            return self._state.items.get(item_id)

    def get_entry(self, entry_id: str) -> Optional[KnowledgeEntry]:
        with self._lock:
            return self._state.entries.get(entry_id)

    @property
    def entry_count(self) -> int:
        with self._lock:
            return len(self._state.entries)

    def pending_count(self, company_id: Optional[str] = None) -> int:
        return len(self.list_review_items(company_id=company_id, status=ItemStatus.PENDING))

    def export_entries(
        self, path: str | Path, company_id: Optional[str] = None, active_only: bool = True
    ) -> int:
        """Write line-delimited question/answer records for downstream retrieval."""
        with self._lock:
            entries = list(self._state.entries.values())
        if company_id is not None:
            entries = [e for e in entries if e.company_id == company_id]
        if active_only:
            entries = [e for e in entries if e.status is EntryStatus.ACTIVE]
        entries.sort(key=lambda e: e.entry_id)
        with open(path, "w", encoding="utf-8") as fh:
            for e in entries:
                fh.write(
                    json.dumps(
                        {
                            "entry_id": e.entry_id,
                            "company_id": e.company_id,
                            "question": e.question,
                            "answer": e.answer,
                            "updated_at": format_rfc3339(e.updated_at),
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
        return len(entries)
