"""Strict parsers and renderers for the three model wire formats.

All parsers are fail-closed: a single malformed element rejects the entire
reply. A bounded repair pass (strip code fences, then strip surrounding prose)
runs once before giving up, because models routinely wrap JSON in markdown
despite being told not to.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Sequence

from ..domain import QAPair

if TYPE_CHECKING:  # pragma: no cover - cycle guard, types only
    from ..recommend import RepresentativeQA


class ReplyError(Exception):
    """Base class for model-reply parsing failures."""


class MalformedReply(ReplyError):
    pass


class MissingKey(ReplyError):
    pass


class EmptyField(ReplyError):
    pass


class InvalidType(ReplyError):
    pass


class NegativeCount(ReplyError):
    pass


class InconsistentCounts(ReplyError):
    pass


@dataclass(frozen=True)
class JudgeVerdict:
    total_correct: int
    total_predicted: int
    justification: str
    subject_id: str

    def __post_init__(self) -> None:
        if self.total_correct < 0 or self.total_predicted < 0:
            raise NegativeCount(
                f"verdict counts must be non-negative, got "
                f"({self.total_correct}, {self.total_predicted})"
            )
        if self.total_correct > self.total_predicted:
            raise InconsistentCounts(
                f"total_correct {self.total_correct} exceeds "
                f"total_predicted {self.total_predicted}"
            )


_FENCE_RE = re.compile(r"```[a-zA-Z]*\s*(.*?)```", re.DOTALL)


def _repair(text: str) -> str:
    """One bounded cleanup: prefer a fenced block, else trim to the outer JSON."""
    m = _FENCE_RE.search(text)
    if m:
        return m.group(1).strip()
    starts = [i for i in (text.find("["), text.find("{")) if i != -1]
    ends = [i for i in (text.rfind("]"), text.rfind("}")) if i != -1]
    if starts and ends and max(ends) > min(starts):
        return text[min(starts) : max(ends) + 1]
    return text


def _parse_payload(text: str, expect: type) -> Any:
    candidate = text.strip()
    try:
        data = json.loads(candidate)
    except json.JSONDecodeError as first:
        repaired = _repair(candidate)
        if repaired == candidate:
            raise MalformedReply(f"reply is not JSON: {first}") from None
        try:
            data = json.loads(repaired)
        except json.JSONDecodeError as second:
            raise MalformedReply(f"reply is not JSON after repair: {second}") from None
    if not isinstance(data, expect):
        raise MalformedReply(
            f"expected top-level {expect.__name__}, got {type(data).__name__}"
        )
    return data


def _required_str(obj: dict, key: str) -> str:
    if key not in obj:
        raise MissingKey(f"reply object lacks {key!r}")
    value = obj[key]
    if not isinstance(value, str):
        raise MalformedReply(f"{key!r} must be a string, got {type(value).__name__}")
    return value


def parse_extraction_response(text: str, source_id: str) -> list[QAPair]:
    """Parse the extraction reply: a JSON array of Question/Answer/Justification.

    Pairs keep array order and get pair_index 0..n-1 tied to source_id. An
    empty array is a legal no-knowledge reply.
    """
    data = _parse_payload(text, list)
    pairs: list[QAPair] = []
    for i, obj in enumerate(data):
        if not isinstance(obj, dict):
            raise MalformedReply(f"element {i} is not an object")
        question = _required_str(obj, "Question")
        answer = _required_str(obj, "Answer")
        if not question.strip():
            raise EmptyField(f"element {i} has a blank Question")
        if not answer.strip():
            raise EmptyField(f"element {i} has a blank Answer")
        justification = obj.get("Justification", "")
        if not isinstance(justification, str):
            raise MalformedReply(f"element {i} Justification must be a string")
        pairs.append(
            QAPair(
                question=question,
                answer=answer,
                justification=justification,
                source_transcript_id=source_id,
                pair_index=i,
            )
        )
    return pairs


def parse_recommendation_response(text: str, cluster_id: str) -> "list[RepresentativeQA]":
    """Parse the recommendation reply into representative QA records.

    Type must be exactly "Rewritten" or "Extracted"; Explanation must be "N/A"
    exactly when the pair was Extracted.
    """
    from ..recommend import RepresentativeQA, RepresentativeType

    data = _parse_payload(text, list)
    reps: list[RepresentativeQA] = []
    for i, obj in enumerate(data):
        if not isinstance(obj, dict):
            raise MalformedReply(f"element {i} is not an object")
        question = _required_str(obj, "Representative Question")
        answer = _required_str(obj, "Representative Answer")
        type_text = _required_str(obj, "Type")
        explanation = _required_str(obj, "Explanation")
        if type_text not in ("Rewritten", "Extracted"):
            raise InvalidType(f"element {i} Type {type_text!r} not Rewritten/Extracted")
        if not question.strip() or not answer.strip():
            raise MalformedReply(f"element {i} has a blank question or answer")
        rep_type = (
            RepresentativeType.EXTRACTED
            if type_text == "Extracted"
            else RepresentativeType.REWRITTEN
        )
        if (explanation == "N/A") != (rep_type is RepresentativeType.EXTRACTED):
            raise MalformedReply(
                f"element {i}: Explanation must be \"N/A\" exactly when Type is Extracted"
            )
        reps.append(
            RepresentativeQA(
                question=question,
                answer=answer,
                type=rep_type,
                explanation=explanation,
                cluster_id=cluster_id,
            )
        )
    return reps


def parse_judge_response(text: str, subject_id: str) -> JudgeVerdict:
    """Parse the judge reply: one object with the two counts and a justification."""
    obj = _parse_payload(text, dict)
    for key in ("Total Correct", "Total Predicted", "Justification"):
        if key not in obj:
            raise MalformedReply(f"judge reply lacks {key!r}")
    correct = obj["Total Correct"]
    predicted = obj["Total Predicted"]
    if isinstance(correct, bool) or isinstance(predicted, bool):
        raise MalformedReply("judge counts must be integers, got booleans")
    if not isinstance(correct, int) or not isinstance(predicted, int):
        raise MalformedReply("judge counts must be integers")
    justification = obj["Justification"]
    if not isinstance(justification, str):
        raise MalformedReply("Justification must be a string")
    return JudgeVerdict(
        total_correct=correct,
        total_predicted=predicted,
        justification=justification,
        subject_id=subject_id,
    )


def render_extraction_reply(pairs: Sequence[QAPair]) -> str:
    """Write pairs in the exact wire format parse_extraction_response accepts."""
    return json.dumps(
        [
            {"Question": p.question, "Answer": p.answer, "Justification": p.justification}
            for p in pairs
        ],
        ensure_ascii=False,
    )


def render_recommendation_reply(reps: Sequence["RepresentativeQA"]) -> str:
    return json.dumps(
        [
            {
                "Representative Question": r.question,
                "Representative Answer": r.answer,
                "Type": r.type.value,
                "Explanation": r.explanation,
            }
            for r in reps
        ],
        ensure_ascii=False,
    )


def render_judge_reply(verdict: JudgeVerdict) -> str:
    return json.dumps(
        {
            "Total Correct": verdict.total_correct,
            "Total Predicted": verdict.total_predicted,
            "Justification": verdict.justification,
        },
        ensure_ascii=False,
    )
