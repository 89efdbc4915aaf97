"""Deterministic rule-based extraction of structured answers from free text.

Parsing is total: any input yields either a value or a :class:`ParseFailure`
with a machine-readable reason code (``no-choice``, ``no-intervals``,
``no-point``, ``no-segments``). Parsers never raise on arbitrary text.

Time tokens may be decimals ("12.8"), integers ("90"), or clock strings
("1:23" reads as 83 seconds); an optional "seconds"/"s" unit may follow. A
time pair needs a dash (ASCII/en/em) or the word "to" between two tokens.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from eventbench.domain import (
    CaptionedSegments,
    GroundedMcq,
    IntervalSet,
    MCQ_LETTERS,
    McqAnswer,
    ParsedPrediction,
    ParseFailure,
    SingleInterval,
    TaskKind,
    TimeInterval,
    TimePoint,
)

_CLOCK = r"\d+:\d{1,2}(?::\d{1,2})?"
_DECIMAL = r"\d+(?:\.\d+)?"
_NUM = rf"(?:{_CLOCK}|{_DECIMAL})"
_UNIT = r"(?:\s*(?:seconds?|secs?|s)\b)?"
_SEP = r"\s*(?:[-–—]|\bto\b)\s*"

_PAIR_RE = re.compile(rf"({_NUM}){_UNIT}{_SEP}({_NUM}){_UNIT}", re.IGNORECASE)
_CANONICAL_CHOICE_RE = re.compile(r"best\s+option\s*:?\s*\(\s*([A-Ea-e])\s*\)", re.IGNORECASE)
_PAREN_LETTER_RE = re.compile(r"\(\s*([A-Ea-e])\s*\)")
_BARE_LETTER_RE = re.compile(r"\b([A-E])\b")  # uppercase only: "a" is an article
_AT_POINT_RE = re.compile(rf"\bat\s+({_NUM})", re.IGNORECASE)
_UNIT_POINT_RE = re.compile(rf"({_NUM})\s*(?:seconds?|secs?|s)\b", re.IGNORECASE)
_CAPTION_LEAD_RE = re.compile(r"^(?:\s*(?:seconds?|secs?|s)\b)?[\s.,;:–—-]*", re.IGNORECASE)
_CAPTION_TAIL_RE = re.compile(r"[\s,;:–—-]*(?:\band\b)?[\s,;:–—-]*$", re.IGNORECASE)


@dataclass(frozen=True)
class ParseConfig:
    """Knobs for interval extraction.

    ``max_intervals`` mirrors the benchmark's per-sample segment cap.
    """

    max_intervals: int = 10
    clamp_to_duration: bool = True
    mcq_letters: dict[TaskKind, str] = field(default_factory=lambda: dict(MCQ_LETTERS))

    def __post_init__(self):
        if self.max_intervals < 1:
            raise ValueError(f"max_intervals must be >= 1, got {self.max_intervals}")


DEFAULT_CONFIG = ParseConfig()


def _to_seconds(token: str) -> float:
    if ":" in token:
        parts = [float(p) for p in token.split(":")]
        seconds = 0.0
        for part in parts:
            seconds = seconds * 60.0 + part
        return seconds
    return float(token)


def parse_mcq(text: str, allowed_letters: str) -> McqAnswer | ParseFailure:
    """Extract a multiple-choice answer letter.

    Tier 1 is the canonical ``Best Option: (X)`` pattern; tier 2 the first
    parenthesized letter; tier 3 the first standalone uppercase letter token.
    Only letters in ``allowed_letters`` count at every tier.
    """
    if not allowed_letters:
        raise ValueError("allowed_letters must be non-empty")
    allowed = set(allowed_letters.upper())
    for regex in (_CANONICAL_CHOICE_RE, _PAREN_LETTER_RE, _BARE_LETTER_RE):
        for match in regex.finditer(text):
            letter = match.group(1).upper()
            if letter in allowed:
                return McqAnswer(letter)
    return ParseFailure("no-choice")


def _extract_pairs(text: str, duration: float, cfg: ParseConfig) -> list[tuple[TimeInterval, int, int]]:
    """All surviving (interval, match_end, next_match_start) triples in text order."""
    matches = list(_PAIR_RE.finditer(text))
    out = []
    for idx, match in enumerate(matches):
        start = _to_seconds(match.group(1))
        end = _to_seconds(match.group(2))
        if cfg.clamp_to_duration:
            start = min(max(start, 0.0), duration)
            end = min(max(end, 0.0), duration)
        if start > end:
            continue
        next_start = matches[idx + 1].start() if idx + 1 < len(matches) else len(text)
        out.append((TimeInterval(start, end), match.end(), next_start))
    return out[: cfg.max_intervals]


def parse_intervals(
    text: str, duration: float, cfg: ParseConfig = DEFAULT_CONFIG
) -> list[TimeInterval] | ParseFailure:
    """Extract every ``a - b`` time pair, in text order.

    Pairs reversed after clamping are dropped, not swapped; at most
    ``cfg.max_intervals`` survive.
    """
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    pairs = _extract_pairs(text, duration, cfg)
    if not pairs:
        return ParseFailure("no-intervals")
    return [iv for iv, _, _ in pairs]


def parse_point(text: str, duration: float) -> TimePoint | ParseFailure:
    """Extract a single timestamp: first number after "at", else first number with a seconds unit."""
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    match = _AT_POINT_RE.search(text) or _UNIT_POINT_RE.search(text)
    if match is None:
        return ParseFailure("no-point")
    value = min(max(_to_seconds(match.group(1)), 0.0), duration)
    return TimePoint(value)


def _clean_caption(raw: str) -> str:
    cleaned = _CAPTION_LEAD_RE.sub("", raw, count=1)
    cleaned = _CAPTION_TAIL_RE.sub("", cleaned, count=1)
    return cleaned.strip()


def parse_captioned(
    text: str, duration: float, cfg: ParseConfig = DEFAULT_CONFIG
) -> list[tuple[TimeInterval, str]] | ParseFailure:
    """Split the response at each time-pair anchor; caption is the text up to the next pair.

    A leading unit token and surrounding separators are stripped from each
    caption; empty captions are allowed.
    """
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    pairs = _extract_pairs(text, duration, cfg)
    if not pairs:
        return ParseFailure("no-segments")
    return [(iv, _clean_caption(text[cap_start:cap_end])) for iv, cap_start, cap_end in pairs]


def parse_grounded(
    text: str, duration: float, cfg: ParseConfig = DEFAULT_CONFIG
) -> tuple[str, TimeInterval] | ParseFailure:
    """Answer letter plus first interval; both must be present."""
    choice = parse_mcq(text, cfg.mcq_letters.get(TaskKind.GVQ, "ABCD"))
    if isinstance(choice, ParseFailure):
        return choice
    intervals = parse_intervals(text, duration, cfg)
    if isinstance(intervals, ParseFailure):
        return intervals
    return choice.letter, intervals[0]


def parse_for_task(
    task: TaskKind, text: str, duration: float, cfg: ParseConfig = DEFAULT_CONFIG
) -> ParsedPrediction:
    """Dispatch to the task-appropriate parser.

    Single-boundary tasks (TVG/EPM/TEM) keep only the first extracted
    interval; set tasks (TAL/EVS) keep all of them.
    """
    if task in (TaskKind.RAR, TaskKind.ECA, TaskKind.RVQ):
        return parse_mcq(text, cfg.mcq_letters.get(task, "ABCD"))
    if task in (TaskKind.TVG, TaskKind.EPM, TaskKind.TEM):
        result = parse_intervals(text, duration, cfg)
        if isinstance(result, ParseFailure):
            return result
        return SingleInterval(result[0])
    if task in (TaskKind.TAL, TaskKind.EVS):
        result = parse_intervals(text, duration, cfg)
        if isinstance(result, ParseFailure):
            return result
        return IntervalSet(result)
    if task is TaskKind.VHD:
        return parse_point(text, duration)
    if task in (TaskKind.DVC, TaskKind.SLC):
        result = parse_captioned(text, duration, cfg)
        if isinstance(result, ParseFailure):
            return result
        return CaptionedSegments(result)
    if task is TaskKind.GVQ:
        result = parse_grounded(text, duration, cfg)
        if isinstance(result, ParseFailure):
            return result
        letter, interval = result
        return GroundedMcq(letter, interval)
    raise ValueError(f"unhandled task {task!r}")
