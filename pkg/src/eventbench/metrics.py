"""Per-sample scoring rules: temporal IoU, thresholded F1, clip-level F1, hit and recall rules."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from eventbench.domain import (
    CaptionedSegments,
    GroundedMcq,
    HighlightRegions,
    IntervalSet,
    McqAnswer,
    ParsedPrediction,
    ParseFailure,
    Sample,
    SingleInterval,
    TaskKind,
    TimeInterval,
    TimePoint,
)

DEFAULT_THRESHOLDS: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7)

IoUThresholds = Sequence[float]


def check_thresholds(thresholds: IoUThresholds) -> tuple[float, ...]:
    """Thresholds must be strictly increasing, each inside (0, 1)."""
    values = tuple(float(t) for t in thresholds)
    if not values:
        raise ValueError("at least one IoU threshold required")
    for value in values:
        if not 0.0 < value < 1.0:
            raise ValueError(f"threshold {value} outside (0, 1)")
    if any(later <= earlier for earlier, later in zip(values, values[1:])):
        raise ValueError("thresholds must be strictly increasing")
    return values


@dataclass(frozen=True)
class ClipGrid:
    """Fixed-length clip grid over a video; the last clip may be partial."""

    duration: float
    clip_length: float = 1.0

    def __post_init__(self):
        if self.clip_length <= 0:
            raise ValueError(f"clip_length must be positive, got {self.clip_length}")
        if self.duration <= 0:
            raise ValueError(f"duration must be positive, got {self.duration}")

    @property
    def num_clips(self) -> int:
        return math.ceil(self.duration / self.clip_length)

    def midpoint(self, index: int) -> float:
        start = index * self.clip_length
        end = min(start + self.clip_length, self.duration)
        return (start + end) / 2.0


def iou(a: TimeInterval, b: TimeInterval) -> float:
    """Temporal intersection over union.

    Two identical zero-length intervals score 1.0; any other zero-measure
    union scores 0.0.
    """
    inter = max(0.0, min(a.end, b.end) - max(a.start, b.start))
    union = a.duration + b.duration - inter
    if union <= 0.0:
        return 1.0 if (a.start == b.start and a.end == b.end) else 0.0
    return inter / union


def mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def score_single_grounding(
    pred: TimeInterval | ParseFailure | None,
    gt: TimeInterval,
    thresholds: IoUThresholds = DEFAULT_THRESHOLDS,
) -> dict[float, float]:
    """Recall@1-style scoring: 1 at each threshold the single prediction clears."""
    thresholds = check_thresholds(thresholds)
    if not isinstance(pred, TimeInterval):
        return {t: 0.0 for t in thresholds}
    value = iou(pred, gt)
    return {t: 1.0 if value >= t else 0.0 for t in thresholds}


def maximum_matches(preds: Sequence[TimeInterval], gts: Sequence[TimeInterval], threshold: float) -> int:
    """Size of the largest one-to-one matching between predictions and ground
    truths among pairs with IoU >= threshold (augmenting-path search).

    The count is what precision/recall/F1 are built from, and the maximum
    count is unique, so scoring stays deterministic and order-invariant.
    """
    adjacency = [
        [p_idx for p_idx, pred in enumerate(preds) if iou(pred, gt) >= threshold] for gt in gts
    ]
    owner: dict[int, int] = {}  # pred index -> gt index

    def try_assign(g_idx: int, visited: set[int]) -> bool:
        for p_idx in adjacency[g_idx]:
            if p_idx in visited:
                continue
            visited.add(p_idx)
            if p_idx not in owner or try_assign(owner[p_idx], visited):
                owner[p_idx] = g_idx
                return True
        return False

    return sum(try_assign(g_idx, set()) for g_idx in range(len(gts)))


def _prf(num_matches: int, num_preds: int, num_gts: int) -> tuple[float, float, float]:
    precision = num_matches / num_preds if num_preds else 0.0
    recall = num_matches / num_gts if num_gts else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def score_set_grounding(
    preds: Sequence[TimeInterval], gts: Sequence[TimeInterval], threshold: float
) -> tuple[float, float, float]:
    """(precision, recall, f1) from optimal one-to-one matching at one threshold."""
    if not gts:
        raise ValueError("gts must be non-empty")
    return _prf(maximum_matches(preds, gts, threshold), len(preds), len(gts))


def score_evs(
    preds: Sequence[TimeInterval], gts: Sequence[TimeInterval], grid: ClipGrid
) -> tuple[float, float, float]:
    """Clip-level (precision, recall, f1): a clip counts for a side when its
    midpoint lies inside any of that side's intervals."""

    def covered(intervals: Sequence[TimeInterval], point: float) -> bool:
        return any(iv.start <= point <= iv.end for iv in intervals)

    pred_clips = 0
    gt_clips = 0
    both = 0
    for index in range(grid.num_clips):
        point = grid.midpoint(index)
        in_pred = covered(preds, point)
        in_gt = covered(gts, point)
        pred_clips += in_pred
        gt_clips += in_gt
        both += in_pred and in_gt
    return _prf(both, pred_clips, gt_clips)


def score_vhd(pred: TimePoint | ParseFailure | None, gt_regions: Sequence[TimeInterval]) -> float:
    """1.0 iff the predicted timestamp falls within any ground-truth region (inclusive)."""
    if not gt_regions:
        raise ValueError("gt_regions must be non-empty")
    if not isinstance(pred, TimePoint):
        return 0.0
    return 1.0 if any(r.start <= pred.seconds <= r.end for r in gt_regions) else 0.0


def score_tem(
    pred: TimeInterval | ParseFailure | None,
    gts: Sequence[TimeInterval],
    thresholds: IoUThresholds = DEFAULT_THRESHOLDS,
) -> dict[float, float]:
    """Recall against the best-overlapping ground truth."""
    thresholds = check_thresholds(thresholds)
    if not gts:
        raise ValueError("gts must be non-empty")
    if not isinstance(pred, TimeInterval):
        return {t: 0.0 for t in thresholds}
    best = max(iou(pred, gt) for gt in gts)
    return {t: 1.0 if best >= t else 0.0 for t in thresholds}


def score_gvq(
    pred: tuple[str, TimeInterval] | ParseFailure | None,
    gt: tuple[str, TimeInterval],
    thresholds: IoUThresholds = DEFAULT_THRESHOLDS,
) -> dict[float, float]:
    """Recall gated on the MCQ answer: both letter and boundary must be right."""
    thresholds = check_thresholds(thresholds)
    gt_letter, gt_interval = gt
    if not (isinstance(pred, tuple) and len(pred) == 2 and isinstance(pred[1], TimeInterval)):
        return {t: 0.0 for t in thresholds}
    letter, interval = pred
    if letter != gt_letter:
        return {t: 0.0 for t in thresholds}
    value = iou(interval, gt_interval)
    return {t: 1.0 if value >= t else 0.0 for t in thresholds}


def score_mcq(pred_letter: str | ParseFailure | None, gt_letter: str) -> float:
    if not isinstance(pred_letter, str):
        return 0.0
    return 1.0 if pred_letter == gt_letter else 0.0


def _threshold_keys(prefix: str, per_threshold: dict[float, float]) -> dict[str, float]:
    out = {f"{prefix}@{t:g}": value for t, value in per_threshold.items()}
    out[prefix] = mean(list(per_threshold.values()))
    return out


def score_sample(
    sample: Sample,
    pred: ParsedPrediction,
    thresholds: IoUThresholds = DEFAULT_THRESHOLDS,
    clip_length: float = 1.0,
) -> dict[str, float]:
    """Task-appropriate metric values for one sample.

    Parse failures score zero everywhere rather than being dropped. Dense
    captioning similarity is not computed here; see ``simscore.sim_score``.
    """
    task = sample.task
    gt = sample.ground_truth

    if task in (TaskKind.RAR, TaskKind.ECA, TaskKind.RVQ):
        assert isinstance(gt, McqAnswer)
        letter = pred.letter if isinstance(pred, McqAnswer) else None
        return {"acc": score_mcq(letter, gt.letter)}

    if task in (TaskKind.TVG, TaskKind.EPM):
        assert isinstance(gt, SingleInterval)
        interval = pred.interval if isinstance(pred, SingleInterval) else None
        return _threshold_keys("f1", score_single_grounding(interval, gt.interval, thresholds))

    if task is TaskKind.TAL:
        assert isinstance(gt, IntervalSet)
        preds = list(pred.intervals) if isinstance(pred, IntervalSet) else []
        per = {t: score_set_grounding(preds, gt.intervals, t)[2] for t in check_thresholds(thresholds)}
        return _threshold_keys("f1", per)

    if task is TaskKind.EVS:
        assert isinstance(gt, IntervalSet)
        preds = list(pred.intervals) if isinstance(pred, IntervalSet) else []
        precision, recall, f1 = score_evs(preds, gt.intervals, ClipGrid(sample.duration, clip_length))
        return {"precision": precision, "recall": recall, "f1": f1}

    if task is TaskKind.VHD:
        assert isinstance(gt, HighlightRegions)
        point = pred if isinstance(pred, TimePoint) else None
        return {"f1": score_vhd(point, gt.regions)}

    if task in (TaskKind.DVC, TaskKind.SLC):
        assert isinstance(gt, CaptionedSegments)
        gt_intervals = [iv for iv, _ in gt.segments]
        preds = [iv for iv, _ in pred.segments] if isinstance(pred, CaptionedSegments) else []
        per = {t: score_set_grounding(preds, gt_intervals, t)[2] for t in check_thresholds(thresholds)}
        return _threshold_keys("f1", per)

    if task is TaskKind.TEM:
        assert isinstance(gt, IntervalSet)
        interval = pred.interval if isinstance(pred, SingleInterval) else None
        return _threshold_keys("recall", score_tem(interval, gt.intervals, thresholds))

    if task is TaskKind.GVQ:
        assert isinstance(gt, GroundedMcq)
        pair = (pred.letter, pred.interval) if isinstance(pred, GroundedMcq) else None
        return _threshold_keys("recall", score_gvq(pair, (gt.letter, gt.interval), thresholds))

    raise ValueError(f"unhandled task {task!r}")
