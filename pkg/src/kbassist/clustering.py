"""Clustering of question embeddings: DBSCAN, a K-Means baseline, silhouette.

Both methods run over cosine distance (K-Means via Lloyd iterations on
L2-normalized points). DBSCAN is the production method; noise points are not
dropped but promoted to singleton clusters so rare questions still reach the
recommendation stage, flagged so downstream can tell them apart.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .embedding import EmbeddedQAPair, EmbeddingVector, cosine_distance, pairwise_distances


class ClusteringError(Exception):
    pass


class InvalidParams(ClusteringError):
    pass


class TooFewClusters(ClusteringError):
    pass


class Method(str, Enum):
    DBSCAN = "dbscan"
    KMEANS = "kmeans"


@dataclass(frozen=True)
class ClusteringParams:
    eps: float = 0.3
    min_samples: int = 2
    method: Method = Method.DBSCAN
    k: int = 1
    seed: int = 0
    max_iterations: int = 100

    def __post_init__(self) -> None:
        if not (0.0 < self.eps <= 2.0):
            raise InvalidParams(f"eps must be in (0, 2], got {self.eps}")
        if self.min_samples < 1:
            raise InvalidParams(f"min_samples must be >= 1, got {self.min_samples}")
        if self.k < 1:
            raise InvalidParams(f"k must be >= 1, got {self.k}")
        if self.max_iterations < 1:
            raise InvalidParams("max_iterations must be >= 1")


@dataclass(frozen=True)
class Cluster:
    cluster_id: str
    members: tuple[EmbeddedQAPair, ...]
    member_indices: tuple[int, ...]
    is_noise_singleton: bool = False


@dataclass(frozen=True)
class ClusteringResult:
    clusters: tuple[Cluster, ...]
    labels: tuple[int, ...]
    params: ClusteringParams
    silhouette: Optional[float] = None
    kmeans_objectives: tuple[float, ...] = field(default=())


Points = Sequence[Union[EmbeddingVector, EmbeddedQAPair]]


def _as_vectors(
    points: Points,
) -> tuple[list[EmbeddingVector], Optional[tuple[EmbeddedQAPair, ...]]]:
    if not points:
        raise InvalidParams("clustering needs at least one point")
    if isinstance(points[0], EmbeddedQAPair):
        embedded = tuple(points)  # type: ignore[arg-type]
        return [e.question_embedding for e in embedded], embedded
    return list(points), None  # type: ignore[arg-type]


def _build_clusters(
    labels: Sequence[int],
    embedded: Optional[tuple[EmbeddedQAPair, ...]],
) -> tuple[Cluster, ...]:
    """Group points by label; -1 points become noise singletons, in index order."""
    by_label: dict[int, list[int]] = {}
    for i, label in enumerate(labels):
        by_label.setdefault(label, []).append(i)

    def members_of(idxs: list[int]) -> tuple[EmbeddedQAPair, ...]:
        return tuple(embedded[i] for i in idxs) if embedded is not None else ()

    clusters: list[Cluster] = []
    for label in sorted(k for k in by_label if k >= 0):
        idxs = by_label[label]
        clusters.append(
            Cluster(
                cluster_id=f"c{label:04d}",
                members=members_of(idxs),
                member_indices=tuple(idxs),
                is_noise_singleton=False,
            )
        )
    for idx in by_label.get(-1, []):
        clusters.append(
            Cluster(
                cluster_id=f"n{idx:04d}",
                members=members_of([idx]),
                member_indices=(idx,),
                is_noise_singleton=True,
            )
        )
    return tuple(clusters)


def dbscan(points: Points, params: ClusteringParams) -> ClusteringResult:
    """Density-based clustering under cosine distance.

    A point is core iff its eps-neighborhood, itself included, holds at least
    min_samples points. Clusters grow breadth-first from the lowest-index
    unvisited core point, so border points reachable from several clusters go
    to the cluster discovered first. Unreached points keep label -1 and are
    then promoted to singleton clusters.
    """
    if params.method is not Method.DBSCAN:
        raise InvalidParams(f"dbscan called with method {params.method}")
    vectors, embedded = _as_vectors(points)
    n = len(vectors)
    dist = pairwise_distances(vectors)
    neighbors = [np.flatnonzero(dist[i] <= params.eps) for i in range(n)]
    core = [len(neighbors[i]) >= params.min_samples for i in range(n)]

    labels = [-1] * n
    next_label = 0
    for start in range(n):
        if labels[start] != -1 or not core[start]:
            continue
        labels[start] = next_label
        queue = deque([start])
        while queue:
            current = queue.popleft()
            for nb in neighbors[current]:
                if labels[nb] == -1:
                    labels[nb] = next_label
                    if core[nb]:
                        queue.append(nb)
        next_label += 1

    return ClusteringResult(
        clusters=_build_clusters(labels, embedded),
        labels=tuple(labels),
        params=params,
        silhouette=_try_silhouette(vectors, labels, dist),
    )


def _kmeanspp_init(matrix: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = matrix.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((matrix - matrix[chosen[0]]) ** 2, axis=1)
    while len(chosen) < k:
        total = float(d2.sum())
        if total > 0.0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # All remaining mass is on already-chosen coincident points; take
            # the first unchosen index so k distinct centroids still exist.
            remaining = [i for i in range(n) if i not in chosen]
            idx = remaining[0]
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((matrix - matrix[idx]) ** 2, axis=1))
    return matrix[chosen].copy()


def kmeans(points: Points, params: ClusteringParams) -> ClusteringResult:
    """Lloyd iterations on L2-normalized points with seeded k-means++ init.

    Converges when assignments stop changing or max_iterations is reached.
    An empty cluster is re-seeded with the point farthest from its assigned
    centroid. The per-iteration objective (sum of squared distances to the
    assigned centroid) is recorded and is non-increasing.
    """
    if params.method is not Method.KMEANS:
        raise InvalidParams(f"kmeans called with method {params.method}")
    vectors, embedded = _as_vectors(points)
    n = len(vectors)
    if params.k > n:
        raise InvalidParams(f"k={params.k} exceeds point count {n}")
    matrix = np.array([v.values for v in vectors], dtype=np.float64)
    matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)

    rng = np.random.default_rng(params.seed)
    centroids = _kmeanspp_init(matrix, params.k, rng)
    assignments = np.full(n, -1, dtype=np.int64)
    objectives: list[float] = []
    for _ in range(params.max_iterations):
        d2 = ((matrix[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assignments = d2.argmin(axis=1)
        # Re-seed empty clusters with the farthest point not already claimed
        # as a fresh centroid this iteration.
        taken: set[int] = set()
        for j in range(params.k):
            if (new_assignments == j).any():
                continue
            point_d2 = d2[np.arange(n), new_assignments].copy()
            point_d2[list(taken)] = -1.0
            far = int(point_d2.argmax())
            centroids[j] = matrix[far]
            new_assignments[far] = j
            taken.add(far)
        objectives.append(
            float(((matrix - centroids[new_assignments]) ** 2).sum())
        )
        if (new_assignments == assignments).all():
            break
        assignments = new_assignments
        for j in range(params.k):
            members = matrix[assignments == j]
            if len(members):
                centroids[j] = members.mean(axis=0)

    labels = [int(a) for a in assignments]
    return ClusteringResult(
        clusters=_build_clusters(labels, embedded),
        labels=tuple(labels),
        params=params,
        silhouette=_try_silhouette(vectors, labels, None),
        kmeans_objectives=tuple(objectives),
    )


def silhouette(points: Points, labels: Sequence[int]) -> float:
    """Mean silhouette s(i) = (b - a) / max(a, b) under cosine distance.

    a(i) is the mean distance to the point's own cluster (self excluded) and
    b(i) the smallest mean distance to any other cluster. Noise points
    (label -1) are excluded; singleton clusters contribute 0. Raises
    TooFewClusters when fewer than two clusters remain after exclusion.
    """
    vectors, _ = _as_vectors(points)
    if len(labels) != len(vectors):
        raise InvalidParams("labels and points must have equal length")
    return _silhouette_from_matrix(pairwise_distances(vectors), labels)


def _silhouette_from_matrix(dist: np.ndarray, labels: Sequence[int]) -> float:
    kept = [i for i, lab in enumerate(labels) if lab != -1]
    groups: dict[int, list[int]] = {}
    for i in kept:
        groups.setdefault(labels[i], []).append(i)
    if len(groups) < 2:
        raise TooFewClusters(f"need >= 2 clusters, have {len(groups)}")
    scores: list[float] = []
    for i in kept:
        own = groups[labels[i]]
        if len(own) == 1:
            scores.append(0.0)
            continue
        a = sum(dist[i][j] for j in own if j != i) / (len(own) - 1)
        b = min(
            sum(dist[i][j] for j in other) / len(other)
            for lab, other in groups.items()
            if lab != labels[i]
        )
        denom = max(a, b)
        scores.append((b - a) / denom if denom > 0.0 else 0.0)
    return float(sum(scores) / len(scores))


def _try_silhouette(
    vectors: list[EmbeddingVector], labels: Sequence[int], dist: Optional[np.ndarray]
) -> Optional[float]:
    if dist is None:
        dist = pairwise_distances(vectors)
    try:
        return _silhouette_from_matrix(dist, labels)
    except TooFewClusters:
        return None


@dataclass(frozen=True)
class MethodComparison:
    dbscan_cluster_count: int
    kmeans_cluster_count: int
    dbscan_silhouette: Optional[float]
    kmeans_silhouette: Optional[float]


def compare_methods(
    points: Points, dbscan_params: ClusteringParams, kmeans_params: ClusteringParams
) -> MethodComparison:
    """Run both methods on the same points and report counts and silhouettes."""
    db = dbscan(points, dbscan_params)
    km = kmeans(points, kmeans_params)
    return MethodComparison(
        dbscan_cluster_count=len(db.clusters),
        kmeans_cluster_count=len(km.clusters),
        dbscan_silhouette=db.silhouette,
        kmeans_silhouette=km.silhouette,
    )


def write_clusters_file(result: ClusteringResult, path: str | Path) -> None:
    """One record per cluster plus a trailing summary record, line-delimited."""
    with open(path, "w", encoding="utf-8") as fh:
        for cluster in result.clusters:
            record = {
                "cluster_id": cluster.cluster_id,
                "member_pair_ids": [m.pair.pair_id for m in cluster.members],
                "member_indices": list(cluster.member_indices),
                "is_noise_singleton": cluster.is_noise_singleton,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        summary = {
            "summary": True,
            "params": {
                "eps": result.params.eps,
                "min_samples": result.params.min_samples,
                "method": result.params.method.value,
                "k": result.params.k,
                "seed": result.params.seed,
                "max_iterations": result.params.max_iterations,
            },
            "silhouette": result.silhouette,
        }
        fh.write(json.dumps(summary, ensure_ascii=False) + "\n")


def read_clusters_file(path: str | Path) -> tuple[list[dict], dict]:
    """Return (cluster records, summary record) from a clusters file."""
    records: list[dict] = []
    summary: dict = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if record.get("summary"):
                summary = record
            else:
                records.append(record)
    return records, summary
