"""Metric computation: judge-count P/R/F1, ROUGE, agreement, Wilcoxon test.

Precision/recall pool counts across subjects before dividing (micro-average),
reported as percentages. ROUGE tokenizes by lowercasing and splitting on
non-alphanumeric runs, with no stemming. The Wilcoxon signed-rank test is
exact (full sign enumeration via convolution) up to 12 effective pairs and a
tie-corrected normal approximation past that.
"""
from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .gateway import JudgeVerdict


class EvaluationError(Exception):
    pass


class MissingReference(EvaluationError):
    pass


class UnmappedSubject(EvaluationError):
    pass


class SubjectMismatch(EvaluationError):
    pass


class AllZeroDifferences(EvaluationError):
    pass


@dataclass(frozen=True)
class MetricReport:
    precision: float
    recall: float
    f1: float
    pair_count: int
    rouge1: Optional[float] = None
    rouge2: Optional[float] = None
    rougeL: Optional[float] = None
    group_id: Optional[str] = None
    zero_denominator: bool = False


def precision_recall_f1(
    verdicts: Sequence[JudgeVerdict],
    reference_counts: Mapping[str, int],
    group_id: Optional[str] = None,
) -> MetricReport:
    """Micro-averaged precision/recall/F1 over judge verdicts, in percent.

    precision = sum(correct) / sum(predicted), recall = sum(correct) /
    sum(reference), f1 their harmonic mean. A zero denominator yields 0 for
    that ratio and sets the zero_denominator flag.
    """
    for v in verdicts:
        if v.subject_id not in reference_counts:
            raise MissingReference(f"no reference count for subject {v.subject_id!r}")
    sum_correct = sum(v.total_correct for v in verdicts)
    sum_predicted = sum(v.total_predicted for v in verdicts)
    sum_reference = sum(reference_counts[v.subject_id] for v in verdicts)
    flagged = False
    if sum_predicted > 0:
        precision = 100.0 * sum_correct / sum_predicted
    else:
        precision, flagged = 0.0, True
    if sum_reference > 0:
        recall = 100.0 * sum_correct / sum_reference
    else:
        recall, flagged = 0.0, True
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1, flagged = 0.0, True
    return MetricReport(
        precision=precision,
        recall=recall,
        f1=f1,
        pair_count=sum_predicted,
        group_id=group_id,
        zero_denominator=flagged,
    )


_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")


def _tokens(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def rouge_n(candidate: str, reference: str, n: int) -> float:
    """Clipped n-gram overlap F-measure; 0 when either side has no n-grams."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = _tokens(candidate)
    ref = _tokens(reference)
    cand_grams = Counter(tuple(cand[i : i + n]) for i in range(len(cand) - n + 1))
    ref_grams = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
    total_cand = sum(cand_grams.values())
    total_ref = sum(ref_grams.values())
    if total_cand == 0 or total_ref == 0:
        return 0.0
    overlap = sum(min(count, ref_grams[gram]) for gram, count in cand_grams.items())
    precision = overlap / total_cand
    recall = overlap / total_ref
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                current.append(prev[j - 1] + 1)
            else:
                current.append(max(prev[j], current[j - 1]))
        prev = current
    return prev[len(b)]


def rouge_l(candidate: str, reference: str) -> float:
    """Longest-common-subsequence F-measure over the same tokenization."""
    cand = _tokens(candidate)
    ref = _tokens(reference)
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2.0 * precision * recall / (precision + recall)


def rouge_means(
    candidates: Sequence[str], references: Sequence[str]
) -> tuple[float, float, float]:
    """Mean ROUGE-1/2/L over index-aligned candidate/reference text pairs."""
    if not candidates or not references:
        return 0.0, 0.0, 0.0
    count = min(len(candidates), len(references))
    r1 = sum(rouge_n(candidates[i], references[i], 1) for i in range(count)) / count
    r2 = sum(rouge_n(candidates[i], references[i], 2) for i in range(count)) / count
    rl = sum(rouge_l(candidates[i], references[i]) for i in range(count)) / count
    return r1, r2, rl


def aggregate_by_company(
    verdicts: Sequence[JudgeVerdict],
    reference_counts: Mapping[str, int],
    company_map: Mapping[str, str],
) -> list[MetricReport]:
    """One report per company (sorted by id) plus a pooled overall report."""
    for v in verdicts:
        if v.subject_id not in company_map:
            raise UnmappedSubject(f"subject {v.subject_id!r} has no company mapping")
    by_company: dict[str, list[JudgeVerdict]] = {}
    for v in verdicts:
        by_company.setdefault(company_map[v.subject_id], []).append(v)
    reports = [
        precision_recall_f1(group, reference_counts, group_id=company)
        for company, group in sorted(by_company.items())
    ]
    reports.append(precision_recall_f1(verdicts, reference_counts, group_id="overall"))
    return reports


def agreement_rate(
    judge_counts: Mapping[str, int], human_counts: Mapping[str, int]
) -> float:
    """Fraction of subjects where the judge count equals the human count."""
    if set(judge_counts) != set(human_counts):
        raise SubjectMismatch("judge and human counts cover different subjects")
    if not judge_counts:
        raise SubjectMismatch("no subjects to compare")
    matches = sum(1 for s, c in judge_counts.items() if c == human_counts[s])
    return matches / len(judge_counts)


@dataclass(frozen=True)
class PairedSample:
    a: tuple[float, ...]
    b: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.a) != len(self.b):
            raise ValueError("paired samples must have equal length")
        if not self.a:
            raise ValueError("paired samples must be non-empty")


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p_value: float
    n_effective: int
    method: str  # "exact" or "normal"


EXACT_CUTOVER = 12


def _midranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j + 2) / 2.0  # average of 1-based positions i+1 .. j+1
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def wilcoxon_signed_rank(samples: PairedSample) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired counts.

    Zero differences are dropped; absolute differences receive mid-ranks on
    ties; the statistic is W = min(W+, W-). For n <= 12 the p-value counts
    sign assignments with min(S, total-S) <= W over all 2^n of them, via a
    convolution over doubled (hence integral) ranks.
    """
    diffs = [x - y for x, y in zip(samples.a, samples.b) if x != y]
    n = len(diffs)
    if n == 0:
        raise AllZeroDifferences("all paired differences are zero")
    ranks = _midranks([abs(d) for d in diffs])
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)
    w_minus = sum(r for r, d in zip(ranks, diffs) if d < 0)
    w = min(w_plus, w_minus)

    if n <= EXACT_CUTOVER:
        doubled = [round(2 * r) for r in ranks]
        total = sum(doubled)
        w2 = round(2 * w)
        # distribution of the doubled positive-rank sum over sign assignments
        dist = [1] + [0] * total
        for r2 in doubled:
            nxt = dist[:]
            for s in range(total - r2 + 1):
                if dist[s]:
                    nxt[s + r2] += dist[s]
            dist = nxt
        hits = sum(c for s, c in enumerate(dist) if min(s, total - s) <= w2)
        return WilcoxonResult(
            statistic=w, p_value=hits / 2**n, n_effective=n, method="exact"
        )

    mean = n * (n + 1) / 4.0
    variance = n * (n + 1) * (2 * n + 1) / 24.0
    tie_sizes = Counter(abs(d) for d in diffs).values()
    variance -= sum(t**3 - t for t in tie_sizes) / 48.0
    if variance <= 0:
        return WilcoxonResult(statistic=w, p_value=1.0, n_effective=n, method="normal")
    z = (w - mean + 0.5) / math.sqrt(variance)
    p = min(1.0, 2.0 * 0.5 * math.erfc(-z / math.sqrt(2.0)))
    return WilcoxonResult(statistic=w, p_value=max(p, 0.0), n_effective=n, method="normal")


# -- verdict record files ----------------------------------------------------


def write_verdicts_file(
    verdicts: Sequence[JudgeVerdict],
    reference_counts: Mapping[str, int],
    company_map: Mapping[str, str],
    path: str | Path,
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in verdicts:
            fh.write(
                json.dumps(
                    {
                        "subject_id": v.subject_id,
                        "total_correct": v.total_correct,
                        "total_predicted": v.total_predicted,
                        "reference_count": reference_counts.get(v.subject_id),
                        "company_id": company_map.get(v.subject_id, ""),
                        "justification": v.justification,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_verdicts_file(
    path: str | Path,
) -> tuple[list[JudgeVerdict], dict[str, int], dict[str, str]]:
    """Return (verdicts, per-subject reference counts, subject->company map)."""
    verdicts: list[JudgeVerdict] = []
    references: dict[str, int] = {}
    companies: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            verdicts.append(
                JudgeVerdict(
                    total_correct=rec["total_correct"],
                    total_predicted=rec["total_predicted"],
                    justification=rec.get("justification", ""),
                    subject_id=rec["subject_id"],
                )
            )
            if rec.get("reference_count") is not None:
                references[rec["subject_id"]] = rec["reference_count"]
            if rec.get("company_id"):
                companies[rec["subject_id"]] = rec["company_id"]
    return verdicts, references, companies


def format_report_table(reports: Sequence[MetricReport]) -> str:
    """Human-readable fixed-width table of metric reports."""
    header = f"{'group':<16} {'precision':>9} {'recall':>9} {'f1':>9} {'pairs':>8}"
    rows = [header, "-" * len(header)]
    for r in reports:
        rows.append(
            f"{(r.group_id or '-'):<16} {r.precision:>9.2f} {r.recall:>9.2f} "
            f"{r.f1:>9.2f} {r.pair_count:>8d}"
        )
    return "\n".join(rows)


def write_reports_file(reports: Sequence[MetricReport], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(
                json.dumps(
                    {
                        "group_id": r.group_id,
                        "precision": r.precision,
                        "recall": r.recall,
                        "f1": r.f1,
                        "pair_count": r.pair_count,
                        "rouge1": r.rouge1,
                        "rouge2": r.rouge2,
                        "rougeL": r.rougeL,
                        "zero_denominator": r.zero_denominator,
                    }
                )
                + "\n"
            )
