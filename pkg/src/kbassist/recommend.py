"""Stage 3: representative QA selection per cluster, plus a dedup/filter guard.

Each cluster is sent through the recommendation prompt; the parsed
representatives are embedded and then passed through a greedy cross-cluster
near-duplicate filter, since a small clustering eps can split one paraphrase
group across clusters and the knowledge base must not absorb both copies.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

from .clustering import Cluster
from .embedding import EmbeddingProvider, EmbeddingVector, cosine_similarity
from .gateway import (
    ProviderConfig,
    ReplyError,
    build_recommendation_prompt,
    complete,
    parse_recommendation_response,
)

DEFAULT_MAX_SIMILARITY = 0.9


class RepresentativeType(str, Enum):
    EXTRACTED = "Extracted"
    REWRITTEN = "Rewritten"


@dataclass(frozen=True)
class RepresentativeQA:
    question: str
    answer: str
    type: RepresentativeType
    explanation: str
    cluster_id: str
    source_pair_indices: tuple[int, ...] = ()
    question_embedding: Optional[EmbeddingVector] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.question.strip() or not self.answer.strip():
            raise ValueError("representative question and answer must be non-empty")
        if (self.explanation == "N/A") != (self.type is RepresentativeType.EXTRACTED):
            raise ValueError('explanation must be "N/A" exactly for Extracted pairs')


def select_representatives(
    c: Cluster, cfg: ProviderConfig, embedder: EmbeddingProvider
) -> list[RepresentativeQA]:
    """Prompt the model for a cluster's representatives and embed the results.

    A malformed reply triggers exactly one re-prompt; a second parse failure
    propagates so the caller can mark the cluster failed without killing the
    rest of the run. An empty list is a valid outcome (nothing in the cluster
    qualified).
    """
    prompt = build_recommendation_prompt(c, cfg.max_input_tokens)
    reply = complete(prompt, cfg)
    try:
        reps = parse_recommendation_response(reply, c.cluster_id)
    except ReplyError:
        reply = complete(prompt, cfg)
        reps = parse_recommendation_response(reply, c.cluster_id)
    member_lookup = {
        (m.pair.question, m.pair.answer): i for i, m in enumerate(c.members)
    }
    out: list[RepresentativeQA] = []
    for rep in reps:
        source = member_lookup.get((rep.question, rep.answer))
        out.append(
            replace(
                rep,
                source_pair_indices=(source,) if source is not None else (),
                question_embedding=embedder.embed(rep.question),
            )
        )
    return out


def dedup_filter(
    reps: Sequence[RepresentativeQA], max_similarity: float = DEFAULT_MAX_SIMILARITY
) -> list[RepresentativeQA]:
    """Greedy near-duplicate filter over question embeddings, keep-first.

    Scans in input order and drops any representative whose question is more
    similar than max_similarity to one already kept; callers order the input
    by descending source-cluster size so the better-attested copy survives.
    """
    kept: list[RepresentativeQA] = []
    for rep in reps:
        if rep.question_embedding is None:
            raise ValueError(f"representative for {rep.cluster_id} is not embedded")
        if all(
            cosine_similarity(rep.question_embedding, k.question_embedding) <= max_similarity
            for k in kept
        ):
            kept.append(rep)
    return kept


def write_recommendations_file(reps: Sequence[RepresentativeQA], path: str | Path) -> None:
    """Line-delimited records; status is Pending until a reviewer decides."""
    with open(path, "w", encoding="utf-8") as fh:
        for rep in reps:
            record = {
                "question": rep.question,
                "answer": rep.answer,
                "type": rep.type.value,
                "explanation": rep.explanation,
                "cluster_id": rep.cluster_id,
                "source_pair_indices": list(rep.source_pair_indices),
                "status": "Pending",
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_recommendations_file(
    path: str | Path, embedder: Optional[EmbeddingProvider] = None
) -> list[RepresentativeQA]:
    """Rebuild representatives from a recommendations file.

    Embeddings are not stored in the file; pass an embedder to recompute them
    (the embedding cache makes repeats cheap).
    """
    reps: list[RepresentativeQA] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            reps.append(
                RepresentativeQA(
                    question=record["question"],
                    answer=record["answer"],
                    type=RepresentativeType(record["type"]),
                    explanation=record["explanation"],
                    cluster_id=record["cluster_id"],
                    source_pair_indices=tuple(record.get("source_pair_indices", ())),
                    question_embedding=(
                        embedder.embed(record["question"]) if embedder else None
                    ),
                )
            )
    return reps
