"""Toolkit for building and scoring event-level, time-sensitive video-language benchmarks."""

from eventbench.domain import (
    CaptionedSegments,
    GroundedMcq,
    GroundTruth,
    HighlightRegions,
    IntervalSet,
    InvariantViolation,
    McqAnswer,
    ParsedPrediction,
    ParseFailure,
    Sample,
    ScoreRecord,
    SingleInterval,
    TaskKind,
    TimeInterval,
    TimePoint,
    clamp_interval,
    read_manifest,
    validate_sample,
    write_manifest,
)

__version__ = "0.1.0"

__all__ = [
    "CaptionedSegments",
    "GroundedMcq",
    "GroundTruth",
    "HighlightRegions",
    "IntervalSet",
    "InvariantViolation",
    "McqAnswer",
    "ParseFailure",
    "ParsedPrediction",
    "Sample",
    "ScoreRecord",
    "SingleInterval",
    "TaskKind",
    "TimeInterval",
    "TimePoint",
    "clamp_interval",
    "read_manifest",
    "validate_sample",
    "write_manifest",
    "__version__",
]
