"""Shared generators and independent oracles used across the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from eventbench.domain import (
    CaptionedSegments,
    GroundedMcq,
    IntervalSet,
    McqAnswer,
    SingleInterval,
    TaskKind,
    TimeInterval,
    TimePoint,
)
from eventbench.metrics import iou

WORDS = (
    "cut", "apple", "wash", "dishes", "pour", "water", "stir", "mixture",
    "open", "door", "person", "walks", "into", "kitchen", "slice", "bread",
    "add", "sugar", "squeeze", "lemon", "place", "cheese", "spread", "butter",
)


def random_interval(rng: np.random.Generator, duration: float) -> TimeInterval:
    start = rng.uniform(0.0, duration)
    end = rng.uniform(start, duration)
    return TimeInterval(start, end)


def random_caption(rng: np.random.Generator) -> str:
    words = [WORDS[int(i)] for i in rng.integers(0, len(WORDS), size=int(rng.integers(1, 6)))]
    text = " ".join(words)
    return text + "." if rng.random() < 0.5 else text


def random_ground_truth(task: TaskKind, rng: np.random.Generator, duration: float):
    """A ground truth whose canonical response can round-trip through the parser."""
    if task in (TaskKind.RAR, TaskKind.ECA):
        return McqAnswer("ABCD"[int(rng.integers(4))])
    if task is TaskKind.RVQ:
        return McqAnswer("ABCDE"[int(rng.integers(5))])
    if task in (TaskKind.TVG, TaskKind.EPM):
        return SingleInterval(random_interval(rng, duration))
    if task in (TaskKind.TAL, TaskKind.EVS):
        count = int(rng.integers(1, 9))
        return IntervalSet([random_interval(rng, duration) for _ in range(count)])
    if task is TaskKind.TEM:
        # the canonical response carries exactly one boundary
        return IntervalSet([random_interval(rng, duration)])
    if task is TaskKind.VHD:
        return TimePoint(float(rng.uniform(0.0, duration)))
    if task in (TaskKind.DVC, TaskKind.SLC):
        count = int(rng.integers(1, 7))
        return CaptionedSegments([(random_interval(rng, duration), random_caption(rng)) for _ in range(count)])
    if task is TaskKind.GVQ:
        return GroundedMcq("ABCD"[int(rng.integers(4))], random_interval(rng, duration))
    raise AssertionError(task)


def intervals_close(a: TimeInterval, b: TimeInterval, tol: float = 0.05 + 1e-9) -> bool:
    return abs(a.start - b.start) <= tol and abs(a.end - b.end) <= tol


def assert_round_trip(task: TaskKind, gt, parsed) -> None:
    """Parsed canonical response must recover the ground truth exactly
    (times within the one-decimal rendering tolerance of 0.05 s)."""
    if isinstance(gt, McqAnswer):
        assert parsed == gt
    elif isinstance(gt, SingleInterval):
        assert isinstance(parsed, SingleInterval) and intervals_close(parsed.interval, gt.interval)
    elif isinstance(gt, IntervalSet):
        if task is TaskKind.TEM:
            # the canonical response carries one boundary
            assert isinstance(parsed, SingleInterval) and intervals_close(parsed.interval, gt.intervals[0])
        else:
            assert isinstance(parsed, IntervalSet) and len(parsed.intervals) == len(gt.intervals)
            for got, expected in zip(parsed.intervals, gt.intervals):
                assert intervals_close(got, expected)
    elif isinstance(gt, TimePoint):
        assert isinstance(parsed, TimePoint) and abs(parsed.seconds - gt.seconds) <= 0.05 + 1e-9
    elif isinstance(gt, CaptionedSegments):
        assert isinstance(parsed, CaptionedSegments) and len(parsed.segments) == len(gt.segments)
        for (got_iv, got_cap), (want_iv, want_cap) in zip(parsed.segments, gt.segments):
            assert intervals_close(got_iv, want_iv)
            assert got_cap == want_cap
    elif isinstance(gt, GroundedMcq):
        assert isinstance(parsed, GroundedMcq)
        assert parsed.letter == gt.letter and intervals_close(parsed.interval, gt.interval)
    else:
        raise AssertionError(type(gt))


def optimal_match_count(preds, gts, threshold) -> int:
    """Brute force over all injective gt->pred assignments (bitmask DP)."""
    edges = [[iou(p, g) >= threshold for p in preds] for g in gts]
    n_p = len(preds)
    memo: dict[tuple[int, int], int] = {}

    def best(g_idx: int, used: int) -> int:
        if g_idx == len(gts):
            return 0
        key = (g_idx, used)
        if key in memo:
            return memo[key]
        out = best(g_idx + 1, used)
        for p in range(n_p):
            if edges[g_idx][p] and not (used >> p) & 1:
                out = max(out, 1 + best(g_idx + 1, used | (1 << p)))
        memo[key] = out
        return out

    return best(0, 0)


def clip_oracle(preds, gts, duration, clip_length=1.0):
    """Independent clip-enumeration implementation of EVS scoring."""
    import math

    n_clips = math.ceil(duration / clip_length)
    tp = fp = fn = 0
    pred_marked = gt_marked = both = 0
    for i in range(n_clips):
        lo = i * clip_length
        hi = min(lo + clip_length, duration)
        mid = (lo + hi) / 2.0
        in_pred = any(iv.start <= mid <= iv.end for iv in preds)
        in_gt = any(iv.start <= mid <= iv.end for iv in gts)
        pred_marked += in_pred
        gt_marked += in_gt
        both += in_pred and in_gt
    precision = both / pred_marked if pred_marked else 0.0
    recall = both / gt_marked if gt_marked else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
