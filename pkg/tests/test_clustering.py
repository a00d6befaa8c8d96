import math

import numpy as np
import pytest

from kbassist.clustering import (
    Cluster,
    ClusteringParams,
    InvalidParams,
    Method,
    TooFewClusters,
    compare_methods,
    dbscan,
    kmeans,
    read_clusters_file,
    silhouette,
    write_clusters_file,
)
from kbassist.domain import QAPair
from kbassist.embedding import EmbeddingVector, HashedTrigramProvider, embed_pairs

from .oracles import brute_dbscan, brute_pairwise, brute_silhouette


def at_angle(degrees, model="m"):
    rad = math.radians(degrees)
    return EmbeddingVector((math.cos(rad), math.sin(rad)), model)


def random_vectors(rng, n, dim, model="m"):
    rows = rng.normal(size=(n, dim))
    return [EmbeddingVector(tuple(float(x) for x in row), model) for row in rows]


def partition_of(result):
    """Set of frozensets over all points, noise promoted to singletons."""
    return {frozenset(c.member_indices) for c in result.clusters}


def oracle_partition(vectors, eps, min_samples):
    dist = brute_pairwise([v.values for v in vectors])
    clusters, _core = brute_dbscan(dist, eps, min_samples)
    covered = set().union(*clusters) if clusters else set()
    parts = {frozenset(c) for c in clusters}
    parts |= {frozenset({i}) for i in range(len(vectors)) if i not in covered}
    return parts


KM = ClusteringParams(method=Method.KMEANS, k=2)


def test_params_validation():
    for bad in (
        dict(eps=0.0),
        dict(eps=2.5),
        dict(min_samples=0),
        dict(method=Method.KMEANS, k=0),
        dict(max_iterations=0),
    ):
        with pytest.raises(InvalidParams):
            ClusteringParams(**bad)


def test_method_mismatch_rejected():
    pts = [at_angle(0), at_angle(5)]
    with pytest.raises(InvalidParams):
        dbscan(pts, KM)
    with pytest.raises(InvalidParams):
        kmeans(pts, ClusteringParams())


def test_empty_input_rejected():
    with pytest.raises(InvalidParams):
        dbscan([], ClusteringParams())


def test_two_blobs_and_a_noise_point():
    pts = [at_angle(0), at_angle(2), at_angle(90), at_angle(88), at_angle(45)]
    result = dbscan(pts, ClusteringParams(eps=0.05, min_samples=2))
    assert result.labels == (0, 0, 1, 1, -1)
    ids = {c.cluster_id: c for c in result.clusters}
    assert set(ids) == {"c0000", "c0001", "n0004"}
    assert ids["c0000"].member_indices == (0, 1)
    assert ids["c0001"].member_indices == (2, 3)
    assert ids["n0004"].is_noise_singleton
    assert not ids["c0000"].is_noise_singleton


def test_min_samples_one_makes_every_point_core():
    pts = [at_angle(0), at_angle(90), at_angle(180)]
    result = dbscan(pts, ClusteringParams(eps=0.01, min_samples=1))
    assert result.labels == (0, 1, 2)
    assert not any(c.is_noise_singleton for c in result.clusters)


def test_eps_boundary_is_inclusive():
    pts = [at_angle(0), at_angle(90)]  # cosine distance exactly 1.0
    joined = dbscan(pts, ClusteringParams(eps=1.0, min_samples=2))
    assert joined.labels == (0, 0)
    split = dbscan(pts, ClusteringParams(eps=0.999, min_samples=2))
    assert split.labels == (-1, -1)
    assert all(c.is_noise_singleton for c in split.clusters)


def test_border_point_joins_first_discovered_cluster():
    # Two dense arcs with one border point reachable from both; the border
    # itself is not core (its neighborhood holds 3 points, min_samples is 4).
    blob_a = [at_angle(d) for d in (0, 5, 10, 15)]
    blob_b = [at_angle(d) for d in (45, 50, 55, 60)]
    border = at_angle(30)
    params = ClusteringParams(eps=0.05, min_samples=4)

    res = dbscan(blob_a + [border] + blob_b, params)
    assert res.labels[4] == 0  # A's expansion reaches the border first

    res_rev = dbscan(blob_b + [border] + blob_a, params)
    assert res_rev.labels[4] == 0  # now label 0 is B's cluster
    # core membership is the same either way: everything except the border
    assert sum(1 for c in res.clusters if c.is_noise_singleton) == 0
    assert {frozenset(c.member_indices) for c in res.clusters} == {
        frozenset({0, 1, 2, 3, 4}),
        frozenset({5, 6, 7, 8}),
    }


def test_dbscan_matches_oracle_on_random_instances():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(2, 30))
        dim = int(rng.integers(2, 6))
        eps = float(rng.uniform(0.05, 1.0))
        min_samples = int(rng.integers(2, 4))
        vectors = random_vectors(rng, n, dim)
        result = dbscan(vectors, ClusteringParams(eps=eps, min_samples=min_samples))
        assert partition_of(result) == oracle_partition(vectors, eps, min_samples)


def test_silhouette_hand_case():
    pts = [at_angle(0), at_angle(30), at_angle(90), at_angle(120)]
    labels = [0, 0, 1, 1]
    a0 = 1 - math.cos(math.radians(30))
    b0 = ((1 - math.cos(math.radians(90))) + (1 - math.cos(math.radians(120)))) / 2
    s0 = (b0 - a0) / max(a0, b0)
    a1 = 1 - math.cos(math.radians(30))
    b1 = ((1 - math.cos(math.radians(60))) + (1 - math.cos(math.radians(90)))) / 2
    s1 = (b1 - a1) / max(a1, b1)
    a2 = 1 - math.cos(math.radians(30))
    b2 = ((1 - math.cos(math.radians(90))) + (1 - math.cos(math.radians(60)))) / 2
    s2 = (b2 - a2) / max(a2, b2)
    a3 = 1 - math.cos(math.radians(30))
    b3 = ((1 - math.cos(math.radians(120))) + (1 - math.cos(math.radians(90)))) / 2
    s3 = (b3 - a3) / max(a3, b3)
    expected = (s0 + s1 + s2 + s3) / 4
    assert silhouette(pts, labels) == pytest.approx(expected, abs=1e-12)


def test_silhouette_identical_points_are_perfectly_separated():
    pts = [at_angle(0), at_angle(0), at_angle(90), at_angle(90)]
    assert silhouette(pts, [0, 0, 1, 1]) == pytest.approx(1.0)


def test_silhouette_singletons_and_noise():
    pts = [at_angle(0), at_angle(2), at_angle(90), at_angle(45)]
    with_noise = silhouette(pts, [0, 0, 1, -1])
    without = silhouette(pts[:3], [0, 0, 1])
    assert with_noise == pytest.approx(without)  # noise point plays no part
    # the singleton cluster member contributes exactly 0
    assert silhouette(pts[:3], [0, 0, 1]) == pytest.approx(
        (brute_silhouette(brute_pairwise([v.values for v in pts[:3]]), [0, 0, 1]))
    )


def test_silhouette_zero_denominator_scores_zero():
    pts = [at_angle(10)] * 4
    assert silhouette(pts, [0, 0, 1, 1]) == 0.0


def test_silhouette_needs_two_clusters():
    pts = [at_angle(0), at_angle(5), at_angle(10)]
    with pytest.raises(TooFewClusters):
        silhouette(pts, [0, 0, 0])
    with pytest.raises(TooFewClusters):
        silhouette(pts, [-1, -1, -1])


def test_silhouette_label_length_checked():
    with pytest.raises(InvalidParams):
        silhouette([at_angle(0)], [0, 1])


def test_silhouette_matches_oracle_on_random_instances():
    rng = np.random.default_rng(23)
    for _ in range(10):
        n = int(rng.integers(4, 25))
        vectors = random_vectors(rng, n, 4)
        labels = [int(rng.integers(-1, 3)) for _ in range(n)]
        kept = {lab for lab in labels if lab != -1}
        if len(kept) < 2:
            labels[0], labels[1] = 0, 1
        dist = brute_pairwise([v.values for v in vectors])
        assert silhouette(vectors, labels) == pytest.approx(
            brute_silhouette(dist, labels), abs=1e-9
        )


def test_kmeans_objective_non_increasing():
    rng = np.random.default_rng(5)
    vectors = random_vectors(rng, 40, 6)
    result = kmeans(vectors, ClusteringParams(method=Method.KMEANS, k=4, seed=3))
    objectives = result.kmeans_objectives
    assert objectives, "objective trace must be recorded"
    assert all(b <= a + 1e-9 for a, b in zip(objectives, objectives[1:]))


def test_kmeans_covers_k_nonempty_clusters():
    rng = np.random.default_rng(9)
    vectors = random_vectors(rng, 30, 5)
    result = kmeans(vectors, ClusteringParams(method=Method.KMEANS, k=5, seed=1))
    assert len(result.clusters) == 5
    assert sorted(set(result.labels)) == [0, 1, 2, 3, 4]
    assert sum(len(c.member_indices) for c in result.clusters) == 30


def test_kmeans_deterministic_under_seed():
    rng = np.random.default_rng(2)
    vectors = random_vectors(rng, 25, 4)
    p = ClusteringParams(method=Method.KMEANS, k=3, seed=77)
    assert kmeans(vectors, p).labels == kmeans(vectors, p).labels


def test_kmeans_reseeds_empty_clusters():
    # four coincident points force coincident centroids; the empty cluster
    # must be re-seeded so both clusters end non-empty
    pts = [at_angle(15)] * 4
    result = kmeans(pts, ClusteringParams(method=Method.KMEANS, k=2, seed=0))
    assert len(result.clusters) == 2
    assert all(c.member_indices for c in result.clusters)


def test_kmeans_k_exceeding_points_rejected():
    with pytest.raises(InvalidParams):
        kmeans([at_angle(0)], ClusteringParams(method=Method.KMEANS, k=2))


def test_compare_methods_reports_both():
    pts = [at_angle(d) for d in (0, 2, 4, 90, 92, 94)]
    cmp = compare_methods(
        pts,
        ClusteringParams(eps=0.05, min_samples=2),
        ClusteringParams(method=Method.KMEANS, k=2, seed=0),
    )
    assert cmp.dbscan_cluster_count == 2
    assert cmp.kmeans_cluster_count == 2
    assert cmp.dbscan_silhouette == pytest.approx(cmp.kmeans_silhouette)


def test_clusters_file_round_trip(tmp_path):
    provider = HashedTrigramProvider()
    pairs = [
        QAPair("How do I reset my password?", "Use the reset link.", "", "t1", 0),
        QAPair("How do I reset the password?", "Use the reset link.", "", "t1", 1),
        QAPair("What are your store hours?", "Nine to five.", "", "t2", 0),
    ]
    embedded = embed_pairs(pairs, provider)
    result = dbscan(embedded, ClusteringParams(eps=0.3, min_samples=2))
    path = tmp_path / "clusters.jsonl"
    write_clusters_file(result, path)
    records, summary = read_clusters_file(path)

    assert len(records) == len(result.clusters)
    by_id = {r["cluster_id"]: r for r in records}
    for cluster in result.clusters:
        rec = by_id[cluster.cluster_id]
        assert rec["member_pair_ids"] == [m.pair.pair_id for m in cluster.members]
        assert tuple(rec["member_indices"]) == cluster.member_indices
        assert rec["is_noise_singleton"] == cluster.is_noise_singleton
    assert summary["params"]["eps"] == 0.3
    assert summary["params"]["method"] == "dbscan"
    assert summary["silhouette"] == result.silhouette
