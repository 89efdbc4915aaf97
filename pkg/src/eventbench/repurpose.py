"""Seeded, deterministic annotation-repurposing procedures and pre-filter predicates.

Everything here is pure given an explicit :class:`Rng`; per-sample work uses
seeds derived from ``(master_seed, sample_id)`` so generation parallelizes
without coordination.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from eventbench.domain import TimeInterval
from eventbench.metrics import iou


class GenerationExhausted(RuntimeError):
    def __init__(self, attempts: int):
        super().__init__(f"constraints not satisfied within {attempts} attempts")
        self.attempts = attempts


class WindowInfeasible(ValueError):
    """The ground-truth interval cannot fit inside the requested crop window."""


REJECTION_BUDGET = 10_000


class Rng:
    """Counter-based deterministic random stream (Philox), stable across platforms."""

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    @classmethod
    def for_sample(cls, master_seed: int, sample_id: str) -> "Rng":
        return cls(derive_seed(master_seed, sample_id))

    def uniform(self, low: float, high: float) -> float:
        return float(self._gen.uniform(low, high))

    def integers(self, low: int, high: int) -> int:
        return int(self._gen.integers(low, high))

    def random(self) -> float:
        return float(self._gen.random())


def derive_seed(master_seed: int, sample_id: str) -> int:
    digest = hashlib.sha256(f"{master_seed}:{sample_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


# --- pre-filtering -----------------------------------------------------------

FILTER_KINDS = (
    "duration_range",
    "event_duration_range",
    "min_events",
    "max_segments",
    "class_blocklist",
    "summary_ratio_range",
    "highlight_ratio_range",
)

# metadata key each predicate inspects
_RULE_KEYS = {
    "duration_range": "duration",
    "event_duration_range": "event_durations",
    "min_events": "num_events",
    "max_segments": "num_segments",
    "class_blocklist": "action_class",
    "summary_ratio_range": "summary_ratio",
    "highlight_ratio_range": "highlight_ratio",
}


@dataclass(frozen=True)
class FilterRule:
    """One pre-filter predicate.

    Range rules use ``lo``/``hi``; ``min_events`` uses ``lo``; ``max_segments``
    uses ``hi``; ``class_blocklist`` uses ``values``.
    """

    kind: str
    lo: float | None = None
    hi: float | None = None
    values: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.lo is not None and self.hi is not None and self.lo > self.hi:
            raise ValueError(f"{self.kind}: lo {self.lo} > hi {self.hi}")
        object.__setattr__(self, "values", frozenset(self.values))

    @classmethod
    def from_json(cls, data: Mapping) -> "FilterRule":
        return cls(
            kind=data["kind"],
            lo=data.get("lo"),
            hi=data.get("hi"),
            values=frozenset(data.get("values", ())),
        )

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.lo is not None:
            out["lo"] = self.lo
        if self.hi is not None:
            out["hi"] = self.hi
        if self.values:
            out["values"] = sorted(self.values)
        return out


@dataclass(frozen=True)
class FilterDecision:
    keep: bool
    reason: str | None = None


def _passes(rule: FilterRule, meta: Mapping) -> bool:
    key = _RULE_KEYS[rule.kind]
    if rule.kind == "event_duration_range":
        raw = meta.get("event_durations", meta.get("event_duration"))
        if raw is None:
            return True
        values = raw if isinstance(raw, (list, tuple)) else [raw]
        lo = rule.lo if rule.lo is not None else -math.inf
        hi = rule.hi if rule.hi is not None else math.inf
        return all(lo <= v <= hi for v in values)
    if key not in meta:
        return True  # predicate not applicable to this record
    value = meta[key]
    if rule.kind == "min_events":
        return value >= (rule.lo or 0)
    if rule.kind == "max_segments":
        return value <= (rule.hi if rule.hi is not None else math.inf)
    if rule.kind == "class_blocklist":
        return value not in rule.values
    lo = rule.lo if rule.lo is not None else -math.inf
    hi = rule.hi if rule.hi is not None else math.inf
    return lo <= value <= hi


def apply_filters(meta: Mapping, rules: Sequence[FilterRule]) -> FilterDecision:
    """Keep the record unless a rule fails; report the first failing rule's kind."""
    for rule in rules:
        if not _passes(rule, meta):
            return FilterDecision(False, rule.kind)
    return FilterDecision(True, None)


# --- option and ground-truth generation --------------------------------------


def gen_eca_distracters(gt: TimeInterval, duration: float, rng: Rng) -> list[TimeInterval]:
    """Three distracter boundaries with 0.5x to 2x the ground-truth length.

    Every pair among {gt, d1, d2, d3} keeps IoU <= 0.5. Rejection-sampled with
    a bounded attempt budget per distracter.
    """
    if gt.duration <= 0:
        raise ValueError("ground-truth interval must have positive length")
    chosen = [gt]
    for _ in range(3):
        for attempt in range(1, REJECTION_BUDGET + 1):
            length = rng.uniform(0.5 * gt.duration, 2.0 * gt.duration)
            if length > duration:
                continue
            start = rng.uniform(0.0, duration - length)
            candidate = TimeInterval(start, start + length)
            if all(iou(candidate, other) <= 0.5 for other in chosen):
                chosen.append(candidate)
                break
        else:
            raise GenerationExhausted(REJECTION_BUDGET)
    return chosen[1:]


def gen_rvq_shifted(boundary: TimeInterval, duration: float, rng: Rng) -> TimeInterval:
    """Relocate a boundary so it has exactly zero overlap with the original.

    Prefers a placement of the same length; when neither side can host the
    full length, the larger free side is returned whole (still zero-overlap).
    """
    length = boundary.duration
    left_span = boundary.start  # room in [0, start]
    right_span = duration - boundary.end  # room in [end, duration]
    sides = []
    if left_span >= length:
        sides.append(("left", left_span - length))
    if right_span >= length:
        sides.append(("right", right_span - length))
    if sides:
        total = sum(slack for _, slack in sides)
        if total == 0.0:
            name = sides[0][0]
            offset = 0.0
        else:
            pick = rng.uniform(0.0, total)
            name, slack = sides[0]
            if len(sides) == 2 and pick > sides[0][1]:
                name, slack = sides[1]
                pick -= sides[0][1]
            offset = min(pick, slack)
        if name == "left":
            return TimeInterval(offset, offset + length)
        return TimeInterval(boundary.end + offset, boundary.end + offset + length)
    # no side fits the full length; fall back to the larger free side
    if left_span <= 0 and right_span <= 0:
        raise GenerationExhausted(0)
    if right_span >= left_span:
        return TimeInterval(boundary.end, duration)
    return TimeInterval(0.0, boundary.start)


@dataclass(frozen=True)
class FrameScoreTrack:
    """Per-frame scores, one row per annotator."""

    scores: tuple[tuple[float, ...], ...]
    frame_rate: float = 1.0

    def __init__(self, scores: Sequence[Sequence[float]], frame_rate: float = 1.0):
        rows = tuple(tuple(float(v) for v in row) for row in scores)
        if not rows or not rows[0]:
            raise ValueError("at least one annotator row with one frame required")
        if any(len(row) != len(rows[0]) for row in rows):
            raise ValueError("annotator rows must have equal length")
        if frame_rate <= 0:
            raise ValueError(f"frame_rate must be positive, got {frame_rate}")
        object.__setattr__(self, "scores", rows)
        object.__setattr__(self, "frame_rate", float(frame_rate))

    @property
    def num_frames(self) -> int:
        return len(self.scores[0])

    def averaged(self) -> np.ndarray:
        return np.mean(np.asarray(self.scores, dtype=np.float64), axis=0)


def _merge_frames(indices: Sequence[int], frame_rate: float) -> list[TimeInterval]:
    """Merge runs of consecutive frame indices; frame i covers [i/fr, (i+1)/fr)."""
    out = []
    run_start: int | None = None
    prev: int | None = None
    for index in indices:
        if run_start is None:
            run_start = prev = index
            continue
        if index == prev + 1:
            prev = index
            continue
        out.append(TimeInterval(run_start / frame_rate, (prev + 1) / frame_rate))
        run_start = prev = index
    if run_start is not None:
        out.append(TimeInterval(run_start / frame_rate, (prev + 1) / frame_rate))
    return out


def evs_ground_truth(track: FrameScoreTrack, top_fraction: float = 0.15) -> list[TimeInterval]:
    """Summary boundaries: merge the ceil(top_fraction * N) highest-scoring frames.

    Annotator rows are averaged first; score ties break toward earlier frames.
    """
    if not 0.0 < top_fraction <= 1.0:
        raise ValueError(f"top_fraction must be in (0, 1], got {top_fraction}")
    averaged = track.averaged()
    count = math.ceil(top_fraction * track.num_frames)
    order = np.lexsort((np.arange(track.num_frames), -averaged))
    selected = sorted(int(i) for i in order[:count])
    return _merge_frames(selected, track.frame_rate)


def vhd_ground_truth(track: FrameScoreTrack) -> list[TimeInterval]:
    """Highlight regions: every frame attaining the maximum averaged score."""
    averaged = track.averaged()
    peak = averaged.max()
    selected = [int(i) for i in np.flatnonzero(averaged == peak)]
    return _merge_frames(selected, track.frame_rate)


def crop_video_window(
    duration: float,
    target_len: float,
    rng: Rng,
    gt: TimeInterval | None = None,
) -> TimeInterval:
    """Uniformly placed crop window of min(target_len, duration) seconds.

    When a ground-truth interval is supplied the window is constrained to
    contain it; callers shift annotations with :func:`shift_into_window`.
    """
    if target_len <= 0:
        raise ValueError(f"target_len must be positive, got {target_len}")
    if gt is not None and gt.duration > target_len:
        raise WindowInfeasible(f"ground truth spans {gt.duration}s > window {target_len}s")
    if duration <= target_len:
        return TimeInterval(0.0, duration)
    lo, hi = 0.0, duration - target_len
    if gt is not None:
        lo = max(lo, gt.end - target_len)
        hi = min(hi, gt.start)
    start = rng.uniform(lo, hi) if hi > lo else lo
    return TimeInterval(start, start + target_len)


def shift_into_window(iv: TimeInterval, window: TimeInterval) -> TimeInterval:
    """Express an interval in window coordinates, clipped to the window."""
    start = min(max(iv.start, window.start), window.end) - window.start
    end = min(max(iv.end, window.start), window.end) - window.start
    return TimeInterval(start, end)
