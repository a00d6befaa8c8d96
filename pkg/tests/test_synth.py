import json
import statistics

import pytest

from kbassist.clustering import ClusteringParams, dbscan
from kbassist.domain import Speaker, dump_transcripts, word_count
from kbassist.embedding import cosine_distance
from kbassist.evaluation import aggregate_by_company
from kbassist.domain import QAPair
from kbassist.synth import (
    INTRA_TOPIC_DISTANCE_BOUND,
    TOPIC_BANK,
    InvalidParams,
    PlantPlan,
    PlantedQuestion,
    TranscriptPlan,
    expected_pairs,
    generate_synthetic_corpus,
    plan_verdicts,
    write_plan_file,
)


def test_parameter_validation():
    for bad in (
        dict(n_transcripts=0),
        dict(n_topics=0),
        dict(n_topics=len(TOPIC_BANK) + 1),
        dict(paraphrase_rate=-0.1),
        dict(paraphrase_rate=1.01),
        dict(noise_rate=2.0),
        dict(companies=()),
    ):
        with pytest.raises(InvalidParams):
            generate_synthetic_corpus(seed=1, **bad)


def test_same_seed_reproduces_everything():
    corpus_a, plan_a = generate_synthetic_corpus(seed=7, n_transcripts=12)
    corpus_b, plan_b = generate_synthetic_corpus(seed=7, n_transcripts=12)
    assert plan_a == plan_b
    assert list(corpus_a) == list(corpus_b)


def test_different_seeds_differ():
    corpus_a, _ = generate_synthetic_corpus(seed=7, n_transcripts=5)
    corpus_b, _ = generate_synthetic_corpus(seed=8, n_transcripts=5)
    texts_a = [t.turns for t in corpus_a]
    texts_b = [t.turns for t in corpus_b]
    assert texts_a != texts_b


def test_every_topic_planted_at_least_twice(seed42_corpus):
    _, plan = seed42_corpus
    occurrences = plan.topic_occurrences()
    assert len(plan.topic_ids) == 12
    assert all(count >= 2 for count in occurrences.values()), occurrences


def test_paraphrases_stay_inside_the_declared_radius(embedder):
    eps = ClusteringParams().eps
    assert INTRA_TOPIC_DISTANCE_BOUND < eps
    for topic in TOPIC_BANK:
        vectors = [embedder.embed(topic.question(v)) for v in range(topic.n_variants)]
        for i in range(len(vectors)):
            for j in range(i + 1, len(vectors)):
                d = cosine_distance(vectors[i], vectors[j])
                assert d <= INTRA_TOPIC_DISTANCE_BOUND, (topic.topic_id, i, j, d)


def test_distinct_topics_stay_outside_eps(embedder):
    eps = ClusteringParams().eps
    embedded = [
        (topic.topic_id, embedder.embed(topic.question(v)))
        for topic in TOPIC_BANK
        for v in range(topic.n_variants)
    ]
    for i, (tid_a, va) in enumerate(embedded):
        for tid_b, vb in embedded[i + 1 :]:
            if tid_a == tid_b:
                continue
            assert cosine_distance(va, vb) > eps, (tid_a, tid_b)


def test_only_planted_material_looks_like_a_question(seed42_corpus):
    corpus, plan = seed42_corpus
    truth = {tp.transcript_id: tp for tp in plan.transcripts}
    for transcript in corpus:
        tp = truth[transcript.transcript_id]
        asking_turns = [
            t.text
            for t in transcript.turns
            if t.speaker is Speaker.CUSTOMER and t.text.rstrip().endswith("?")
        ]
        wanted = [p.question for p in tp.planted] + [q for q, _ in tp.noise]
        assert asking_turns == wanted


def test_answers_follow_their_questions(seed42_corpus):
    corpus, plan = seed42_corpus
    truth = expected_pairs(plan)
    for transcript in corpus:
        lines = [(t.speaker, t.text) for t in transcript.turns]
        found = []
        for i, (speaker, text) in enumerate(lines):
            if speaker is Speaker.CUSTOMER and text.rstrip().endswith("?"):
                assert lines[i + 1][0] is Speaker.AGENT
                found.append((text, lines[i + 1][1]))
        assert found == truth[transcript.transcript_id]


def test_word_counts_near_target(seed42_corpus):
    corpus, _ = seed42_corpus
    counts = [word_count(t) for t in corpus]
    assert all(650 <= c <= 1160 for c in counts)
    assert 820 <= statistics.mean(counts) <= 900


def test_transcript_identity_and_spacing():
    corpus, plan = generate_synthetic_corpus(
        seed=3, n_transcripts=4, companies=("acme", "globex")
    )
    transcripts = list(corpus)
    assert [t.transcript_id for t in transcripts] == [f"syn-3-{i:04d}" for i in range(4)]
    assert [t.company_id for t in transcripts] == ["acme", "globex", "acme", "globex"]
    gaps = {
        (transcripts[i + 1].timestamp - transcripts[i].timestamp).total_seconds()
        for i in range(3)
    }
    assert gaps == {13 * 60.0}
    assert {tp.company_id for tp in plan.transcripts} == {"acme", "globex"}


def test_paraphrase_rate_zero_gives_verbatim_topic_clusters(embedder):
    corpus, plan = generate_synthetic_corpus(
        seed=5, n_transcripts=30, n_topics=6, paraphrase_rate=0.0, noise_rate=0.3
    )
    assert all(p.variant == 0 for tp in plan.transcripts for p in tp.planted)

    questions = [
        q for tid, pairs in sorted(expected_pairs(plan).items()) for q, _ in pairs
    ]
    vectors = [embedder.embed(q) for q in questions]
    result = dbscan(vectors, ClusteringParams())
    topic_clusters = [c for c in result.clusters if not c.is_noise_singleton]
    noise_total = sum(len(tp.noise) for tp in plan.transcripts)
    assert len(topic_clusters) == 6
    assert sum(1 for c in result.clusters if c.is_noise_singleton) == noise_total


def test_paraphrase_rate_one_avoids_base_variant():
    _, plan = generate_synthetic_corpus(seed=9, n_transcripts=20, paraphrase_rate=1.0)
    assert all(p.variant >= 1 for tp in plan.transcripts for p in tp.planted)


def test_plan_verdicts_perfect_extraction(seed42_corpus):
    _, plan = seed42_corpus
    extracted = {
        tid: [QAPair(q, a, "", tid, i) for i, (q, a) in enumerate(pairs)]
        for tid, pairs in expected_pairs(plan).items()
    }
    verdicts, references, companies = plan_verdicts(plan, extracted)
    assert len(verdicts) == len(plan.transcripts)
    assert all(v.total_correct == v.total_predicted == references[v.subject_id] for v in verdicts)
    reports = aggregate_by_company(verdicts, references, companies)
    assert reports[-1].group_id == "overall"
    assert reports[-1].precision == 100.0
    assert reports[-1].recall == 100.0
    assert reports[-1].f1 == 100.0


def test_plan_verdicts_penalize_misses_and_inventions(seed42_corpus):
    _, plan = seed42_corpus
    extracted = {
        tid: [QAPair(q, a, "", tid, i) for i, (q, a) in enumerate(pairs)]
        for tid, pairs in expected_pairs(plan).items()
    }
    first = plan.transcripts[0].transcript_id
    second = plan.transcripts[1].transcript_id
    extracted[first].pop()  # miss one real pair
    extracted[second].append(QAPair("Is this invented?", "Entirely.", "", second, 9))

    verdicts, references, _ = plan_verdicts(plan, extracted)
    by_subject = {v.subject_id: v for v in verdicts}
    assert by_subject[first].total_correct == references[first] - 1
    assert by_subject[first].total_predicted == references[first] - 1
    assert by_subject[second].total_correct == references[second]
    assert by_subject[second].total_predicted == references[second] + 1


def test_plan_verdicts_match_as_a_multiset():
    plan = PlantPlan(
        transcripts=(
            TranscriptPlan(
                "t1",
                "acme",
                (
                    PlantedQuestion("x", 0, "Q?", "A"),
                    PlantedQuestion("x", 0, "Q?", "A"),
                ),
                (),
                800,
            ),
        ),
        topic_ids=("x",),
        seed=0,
    )
    triple = [QAPair("Q?", "A", "", "t1", i) for i in range(3)]
    verdicts, references, _ = plan_verdicts(plan, {"t1": triple})
    assert verdicts[0].total_correct == 2  # each planted copy matches once
    assert verdicts[0].total_predicted == 3
    assert references["t1"] == 2


def test_plan_verdicts_handle_missing_transcripts(seed42_corpus):
    _, plan = seed42_corpus
    verdicts, references, _ = plan_verdicts(plan, {})
    assert all(v.total_predicted == 0 and v.total_correct == 0 for v in verdicts)
    assert sum(references.values()) == plan.total_planted()


def test_plan_file_serialization(tmp_path):
    _, plan = generate_synthetic_corpus(seed=2, n_transcripts=3)
    path = tmp_path / "plan.json"
    write_plan_file(plan, path)
    payload = json.loads(path.read_text())
    assert payload["seed"] == 2
    assert payload["topic_ids"] == list(plan.topic_ids)
    assert len(payload["transcripts"]) == 3
    first = payload["transcripts"][0]
    assert first["transcript_id"] == "syn-2-0000"
    assert len(first["planted"]) == 3
    assert {"topic_id", "variant", "question", "answer"} <= set(first["planted"][0])


def test_single_transcript_corpus():
    corpus, plan = generate_synthetic_corpus(seed=1, n_transcripts=1)
    assert len(list(corpus)) == 1
    assert len(plan.transcripts[0].planted) == 3


def test_dump_round_trips_through_domain_io(tmp_path, seed42_corpus):
    corpus, _ = seed42_corpus
    sample = list(corpus)[:3]
    path = tmp_path / "sample.jsonl"
    dump_transcripts(sample, path)
    from kbassist.domain import load_transcripts

    assert load_transcripts(path) == sample
