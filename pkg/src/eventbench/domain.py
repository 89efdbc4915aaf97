"""Shared domain types: samples, time intervals, ground truths, and score records.

Everything here is an immutable value object, safe to share across threads.

Manifest wire format (JSON lines, one sample per line)::

    {"id": "tvg_charades_0001",
     "task": "tvg",
     "source": "charades_sta",
     "video": "AO8RW.mp4",
     "duration": 60.0,
     "instruction": "You are given a video ...",
     "ground_truth": {"kind": "single_interval", "interval": [10.2, 12.8]}}

``ground_truth`` kinds and their payload fields:

======================  =============================================
kind                    payload
======================  =============================================
``mcq``                 ``letter``: one of ``A``-``E``
``single_interval``     ``interval``: ``[start, end]`` seconds
``interval_set``        ``intervals``: list of ``[start, end]``
``highlight_regions``   ``regions``: list of ``[start, end]``
``captioned_segments``  ``segments``: list of ``[[start, end], text]``
``grounded_mcq``        ``letter`` plus ``interval``
======================  =============================================

Parsed predictions reuse the same kinds and add ``time_point``
(``seconds``: float) and ``parse_failure`` (``reason``: str).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence, Union


class InvariantViolation(ValueError):
    """Raised when a domain invariant does not hold."""

    def __init__(self, field_name: str, detail: str):
        super().__init__(f"{field_name}: {detail}")
        self.field = field_name
        self.detail = detail


class Capability(str, Enum):
    REFERRING = "referring"
    GROUNDING = "grounding"
    DENSE_CAPTIONING = "dense_captioning"
    COMPLEX = "complex"


class TaskKind(str, Enum):
    """The twelve benchmark tasks, grouped into four capabilities."""

    RAR = "rar"  # referred action recognition
    ECA = "eca"  # event-caption alignment
    RVQ = "rvq"  # referred video question-answering
    TVG = "tvg"  # temporal video grounding
    EPM = "epm"  # episodic memory
    TAL = "tal"  # temporal action localization
    EVS = "evs"  # extractive video summarization
    VHD = "vhd"  # video highlight detection
    DVC = "dvc"  # dense video captioning
    SLC = "slc"  # step localization and captioning
    TEM = "tem"  # temporal event matching
    GVQ = "gvq"  # grounded video question-answering

    @property
    def capability(self) -> Capability:
        return _CAPABILITY[self]


_CAPABILITY = {
    TaskKind.RAR: Capability.REFERRING,
    TaskKind.ECA: Capability.REFERRING,
    TaskKind.RVQ: Capability.REFERRING,
    TaskKind.TVG: Capability.GROUNDING,
    TaskKind.EPM: Capability.GROUNDING,
    TaskKind.TAL: Capability.GROUNDING,
    TaskKind.EVS: Capability.GROUNDING,
    TaskKind.VHD: Capability.GROUNDING,
    TaskKind.DVC: Capability.DENSE_CAPTIONING,
    TaskKind.SLC: Capability.DENSE_CAPTIONING,
    TaskKind.TEM: Capability.COMPLEX,
    TaskKind.GVQ: Capability.COMPLEX,
}

# Allowed answer letters per MCQ-style task. RVQ carries a fifth
# "unable to answer" option.
MCQ_LETTERS = {
    TaskKind.RAR: "ABCD",
    TaskKind.ECA: "ABCD",
    TaskKind.RVQ: "ABCDE",
    TaskKind.GVQ: "ABCD",
}


@dataclass(frozen=True)
class TimeInterval:
    """Closed interval of seconds inside a video.

    The constructor enforces ordering and finiteness so that intervals behave
    sanely in arithmetic; non-negativity is checked by :func:`validate_sample`
    (and by ``validate()``), because clamping ops legitimately handle raw,
    possibly-negative endpoints.
    """

    start: float
    end: float

    def __post_init__(self):
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise InvariantViolation("interval", f"endpoints must be finite, got ({self.start}, {self.end})")
        if self.start > self.end:
            raise InvariantViolation("interval", f"start {self.start} > end {self.end}")

    @property
    def duration(self) -> float:
        return self.end - self.start

    def validate(self) -> "TimeInterval":
        if self.start < 0:
            raise InvariantViolation("interval", f"negative start {self.start}")
        return self

    def as_pair(self) -> list[float]:
        return [self.start, self.end]


def clamp_interval(iv: TimeInterval, duration: float) -> TimeInterval:
    """Clamp both endpoints into [0, duration]; order is preserved.

    Idempotent: clamping a clamped interval is a no-op.
    """
    if duration <= 0:
        raise InvariantViolation("duration", f"must be positive, got {duration}")
    start = min(max(iv.start, 0.0), duration)
    end = min(max(iv.end, 0.0), duration)
    return TimeInterval(start, end)


@dataclass(frozen=True)
class McqAnswer:
    letter: str

    def __post_init__(self):
        if self.letter not in "ABCDE" or len(self.letter) != 1:
            raise InvariantViolation("letter", f"expected one of A-E, got {self.letter!r}")


@dataclass(frozen=True)
class SingleInterval:
    interval: TimeInterval


@dataclass(frozen=True)
class IntervalSet:
    intervals: tuple[TimeInterval, ...]

    def __init__(self, intervals: Sequence[TimeInterval]):
        object.__setattr__(self, "intervals", tuple(intervals))


@dataclass(frozen=True)
class HighlightRegions:
    regions: tuple[TimeInterval, ...]

    def __init__(self, regions: Sequence[TimeInterval]):
        object.__setattr__(self, "regions", tuple(regions))


@dataclass(frozen=True)
class CaptionedSegments:
    segments: tuple[tuple[TimeInterval, str], ...]

    def __init__(self, segments: Sequence[tuple[TimeInterval, str]]):
        object.__setattr__(self, "segments", tuple((iv, str(text)) for iv, text in segments))


@dataclass(frozen=True)
class GroundedMcq:
    letter: str
    interval: TimeInterval

    def __post_init__(self):
        if self.letter not in "ABCDE" or len(self.letter) != 1:
            raise InvariantViolation("letter", f"expected one of A-E, got {self.letter!r}")


@dataclass(frozen=True)
class TimePoint:
    """A single predicted timestamp (highlight detection answers)."""

    seconds: float


@dataclass(frozen=True)
class ParseFailure:
    """Machine-readable reason why a free-text response could not be parsed."""

    reason: str

    def __post_init__(self):
        if not self.reason:
            raise InvariantViolation("reason", "must be non-empty")


GroundTruth = Union[McqAnswer, SingleInterval, IntervalSet, HighlightRegions, CaptionedSegments, GroundedMcq]
ParsedPrediction = Union[
    McqAnswer, SingleInterval, IntervalSet, HighlightRegions, CaptionedSegments, GroundedMcq, TimePoint, ParseFailure
]

# Which ground-truth variant each task carries.
TASK_VARIANT = {
    TaskKind.RAR: McqAnswer,
    TaskKind.ECA: McqAnswer,
    TaskKind.RVQ: McqAnswer,
    TaskKind.TVG: SingleInterval,
    TaskKind.EPM: SingleInterval,
    TaskKind.TAL: IntervalSet,
    TaskKind.EVS: IntervalSet,
    TaskKind.TEM: IntervalSet,
    TaskKind.VHD: HighlightRegions,
    TaskKind.DVC: CaptionedSegments,
    TaskKind.SLC: CaptionedSegments,
    TaskKind.GVQ: GroundedMcq,
}


@dataclass(frozen=True)
class Sample:
    """One benchmark item."""

    id: str
    task: TaskKind
    source: str
    video: str
    duration: float
    instruction: str
    ground_truth: GroundTruth


@dataclass(frozen=True)
class ScoreRecord:
    """Per-sample metric values, keyed by metric name (e.g. ``f1@0.3``)."""

    sample_id: str
    values: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name, value in self.values.items():
            if not (0.0 <= value <= 1.0):
                raise InvariantViolation(name, f"score {value} outside [0, 1]")


def _gt_intervals(gt: GroundTruth) -> list[TimeInterval]:
    if isinstance(gt, SingleInterval):
        return [gt.interval]
    if isinstance(gt, IntervalSet):
        return list(gt.intervals)
    if isinstance(gt, HighlightRegions):
        return list(gt.regions)
    if isinstance(gt, CaptionedSegments):
        return [iv for iv, _ in gt.segments]
    if isinstance(gt, GroundedMcq):
        return [gt.interval]
    return []


def validate_sample(sample: Sample) -> Sample:
    """Check every type invariant; return the sample unchanged if they hold.

    Raises :class:`InvariantViolation` for out-of-range intervals, a
    ground-truth variant that does not match the task, a letter outside the
    task's option set, or a non-positive duration.
    """
    if not sample.id:
        raise InvariantViolation("id", "must be non-empty")
    if not (math.isfinite(sample.duration) and sample.duration > 0):
        raise InvariantViolation("duration", f"must be positive and finite, got {sample.duration}")

    expected = TASK_VARIANT[sample.task]
    if not isinstance(sample.ground_truth, expected):
        raise InvariantViolation(
            "ground_truth",
            f"task {sample.task.value} expects {expected.__name__}, got {type(sample.ground_truth).__name__}",
        )

    letters = MCQ_LETTERS.get(sample.task)
    if letters is not None:
        letter = sample.ground_truth.letter  # type: ignore[union-attr]
        if letter not in letters:
            raise InvariantViolation("letter", f"{letter!r} not in {letters!r} for task {sample.task.value}")

    for iv in _gt_intervals(sample.ground_truth):
        iv.validate()
        if iv.end > sample.duration:
            raise InvariantViolation(
                "ground_truth", f"interval [{iv.start}, {iv.end}] exceeds duration {sample.duration}"
            )
    return sample


# --- JSON (de)serialization -------------------------------------------------


def gt_to_json(gt: GroundTruth) -> dict:
    if isinstance(gt, McqAnswer):
        return {"kind": "mcq", "letter": gt.letter}
    if isinstance(gt, SingleInterval):
        return {"kind": "single_interval", "interval": gt.interval.as_pair()}
    if isinstance(gt, IntervalSet):
        return {"kind": "interval_set", "intervals": [iv.as_pair() for iv in gt.intervals]}
    if isinstance(gt, HighlightRegions):
        return {"kind": "highlight_regions", "regions": [iv.as_pair() for iv in gt.regions]}
    if isinstance(gt, CaptionedSegments):
        return {"kind": "captioned_segments", "segments": [[iv.as_pair(), text] for iv, text in gt.segments]}
    if isinstance(gt, GroundedMcq):
        return {"kind": "grounded_mcq", "letter": gt.letter, "interval": gt.interval.as_pair()}
    raise TypeError(f"not a ground truth: {type(gt).__name__}")


def gt_from_json(data: dict) -> GroundTruth:
    kind = data.get("kind")
    if kind == "mcq":
        return McqAnswer(data["letter"])
    if kind == "single_interval":
        return SingleInterval(TimeInterval(*data["interval"]))
    if kind == "interval_set":
        return IntervalSet([TimeInterval(*pair) for pair in data["intervals"]])
    if kind == "highlight_regions":
        return HighlightRegions([TimeInterval(*pair) for pair in data["regions"]])
    if kind == "captioned_segments":
        return CaptionedSegments([(TimeInterval(*pair), text) for pair, text in data["segments"]])
    if kind == "grounded_mcq":
        return GroundedMcq(data["letter"], TimeInterval(*data["interval"]))
    raise InvariantViolation("kind", f"unknown ground-truth kind {kind!r}")


def pred_to_json(pred: ParsedPrediction) -> dict:
    if isinstance(pred, TimePoint):
        return {"kind": "time_point", "seconds": pred.seconds}
    if isinstance(pred, ParseFailure):
        return {"kind": "parse_failure", "reason": pred.reason}
    return gt_to_json(pred)


def pred_from_json(data: dict) -> ParsedPrediction:
    kind = data.get("kind")
    if kind == "time_point":
        return TimePoint(data["seconds"])
    if kind == "parse_failure":
        return ParseFailure(data["reason"])
    return gt_from_json(data)


def sample_to_json(sample: Sample) -> dict:
    return {
        "id": sample.id,
        "task": sample.task.value,
        "source": sample.source,
        "video": sample.video,
        "duration": sample.duration,
        "instruction": sample.instruction,
        "ground_truth": gt_to_json(sample.ground_truth),
    }


def sample_from_json(data: dict) -> Sample:
    return Sample(
        id=data["id"],
        task=TaskKind(data["task"]),
        source=data["source"],
        video=data["video"],
        duration=float(data["duration"]),
        instruction=data["instruction"],
        ground_truth=gt_from_json(data["ground_truth"]),
    )


def read_manifest(path: str | Path, validate: bool = True) -> list[Sample]:
    """Load a JSON-lines manifest. Sample ids must be unique."""
    samples = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                sample = sample_from_json(json.loads(line))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise InvariantViolation("manifest", f"line {line_no}: {exc}") from exc
            if sample.id in seen:
                raise InvariantViolation("id", f"duplicate sample id {sample.id!r} at line {line_no}")
            seen.add(sample.id)
            if validate:
                validate_sample(sample)
            samples.append(sample)
    return samples


def write_manifest(samples: Iterable[Sample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for sample in samples:
            handle.write(json.dumps(sample_to_json(sample), ensure_ascii=False) + "\n")
