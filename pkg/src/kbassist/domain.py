"""Core value types for transcripts and extracted QA pairs, plus ingestion.

Transcripts arrive as line-delimited JSON (one conversation per line) and are
validated into immutable objects before anything downstream touches them.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional

_WS_RUN = re.compile(r"[ \t\r\n\f\v]+")


class DomainError(Exception):
    """Base class for transcript validation failures."""


class EmptyTranscript(DomainError):
    pass


class MissingRole(DomainError):
    pass


class UnknownSpeaker(DomainError):
    pass


class Speaker(str, Enum):
    CUSTOMER = "Customer"
    AGENT = "Agent"


def normalize_text(text: str) -> str:
    """Collapse internal whitespace runs to single spaces and trim the ends."""
    return _WS_RUN.sub(" ", text).strip()


@dataclass(frozen=True)
class Turn:
    speaker: Speaker
    text: str
    index: int

    def word_count(self) -> int:
        return len(self.text.split())


@dataclass(frozen=True)
class Transcript:
    transcript_id: str
    company_id: str
    timestamp: datetime
    turns: tuple[Turn, ...]


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str
    justification: str
    source_transcript_id: str
    pair_index: int

    @property
    def pair_id(self) -> str:
        return f"{self.source_transcript_id}#{self.pair_index}"


@dataclass(frozen=True)
class Corpus:
    transcripts: tuple[Transcript, ...]
    company_id: Optional[str] = None
    window_from: Optional[datetime] = None
    window_to: Optional[datetime] = None

    def __post_init__(self) -> None:
        if self.window_from is not None and self.window_to is not None:
            for t in self.transcripts:
                if not (self.window_from <= t.timestamp <= self.window_to):
                    raise DomainError(
                        f"transcript {t.transcript_id} timestamp outside declared window"
                    )

    def __len__(self) -> int:
        return len(self.transcripts)

    def __iter__(self) -> Iterator[Transcript]:
        return iter(self.transcripts)


_SPEAKER_LABELS = {"customer": Speaker.CUSTOMER, "agent": Speaker.AGENT}


def validate_transcript(raw: dict | Transcript) -> Transcript:
    """Validate one ingestion record into a Transcript.

    Speaker labels are matched case-insensitively against "customer"/"agent";
    anything else raises UnknownSpeaker rather than being coerced. Turn text is
    whitespace-normalized; blank turns are dropped; indices are renumbered
    contiguously from 0. Validating an already-valid Transcript is idempotent.
    """
    if isinstance(raw, Transcript):
        raw = {
            "transcript_id": raw.transcript_id,
            "company_id": raw.company_id,
            "timestamp": raw.timestamp,
            "turns": [{"speaker": t.speaker.value, "text": t.text} for t in raw.turns],
        }
    raw_turns = raw.get("turns") or []
    turns: list[Turn] = []
    for entry in raw_turns:
        label = str(entry.get("speaker", "")).strip().lower()
        if label not in _SPEAKER_LABELS:
            raise UnknownSpeaker(f"speaker label {entry.get('speaker')!r} not in customer/agent")
        text = normalize_text(str(entry.get("text", "")))
        if not text:
            continue
        turns.append(Turn(speaker=_SPEAKER_LABELS[label], text=text, index=len(turns)))
    if not turns:
        raise EmptyTranscript(f"transcript {raw.get('transcript_id')!r} has no usable turns")
    speakers = {t.speaker for t in turns}
    if Speaker.CUSTOMER not in speakers or Speaker.AGENT not in speakers:
        raise MissingRole(
            f"transcript {raw.get('transcript_id')!r} needs at least one customer and one agent turn"
        )
    ts = raw.get("timestamp")
    if isinstance(ts, datetime):
        timestamp = ts if ts.tzinfo else ts.replace(tzinfo=timezone.utc)
    else:
        timestamp = parse_rfc3339(str(ts))
    return Transcript(
        transcript_id=str(raw.get("transcript_id", "")),
        company_id=str(raw.get("company_id", "")),
        timestamp=timestamp,
        turns=tuple(turns),
    )


def parse_rfc3339(value: str) -> datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime."""
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        parsed = datetime.fromisoformat(text)
    except ValueError as exc:
        raise DomainError(f"bad timestamp {value!r}: {exc}") from None
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


def format_rfc3339(value: datetime) -> str:
    return value.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def word_count(transcript: Transcript) -> int:
    """Whitespace-delimited token count summed over all turns."""
    return sum(t.word_count() for t in transcript.turns)


def load_transcripts(path: str | Path) -> list[Transcript]:
    """Read line-delimited transcript records from a UTF-8 file."""
    out: list[Transcript] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DomainError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            out.append(validate_transcript(raw))
    return out


def dump_transcripts(transcripts: Iterable[Transcript], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in transcripts:
            record = {
                "transcript_id": t.transcript_id,
                "company_id": t.company_id,
                "timestamp": format_rfc3339(t.timestamp),
                "turns": [
                    {"speaker": turn.speaker.value.lower(), "text": turn.text}
                    for turn in t.turns
                ],
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def build_corpus(
    transcripts: Iterable[Transcript],
    company_id: Optional[str] = None,
    window_from: Optional[datetime] = None,
    window_to: Optional[datetime] = None,
) -> Corpus:
    """Filter transcripts by company and inclusive time window, checking id uniqueness."""
    selected: list[Transcript] = []
    seen: set[str] = set()
    for t in transcripts:
        if company_id is not None and t.company_id != company_id:
            continue
        if window_from is not None and t.timestamp < window_from:
            continue
        if window_to is not None and t.timestamp > window_to:
            continue
        if t.transcript_id in seen:
            raise DomainError(f"duplicate transcript_id {t.transcript_id!r} in corpus")
        seen.add(t.transcript_id)
        selected.append(t)
    return Corpus(
        transcripts=tuple(selected),
        company_id=company_id,
        window_from=window_from,
        window_to=window_to,
    )
