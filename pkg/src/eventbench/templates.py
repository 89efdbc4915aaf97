"""Render task instructions and canonical responses from the stored template corpus.

The corpus lives in ``data/templates.json`` so the exact wording can be
audited and versioned independently of code. Substitution tokens:

* ``{query}`` / ``{question}`` / ``{action}`` / ``{task}`` / ``{domain}``
  take the placeholder of the same name;
* each ``{time}`` consumes the next entry of the ``times`` list (rendered
  with :func:`format_time`);
* each ``{option}`` consumes the next entry of the ``options`` list;
* ``{alt}`` picks a domain-dependent phrase: the ``domain`` placeholder is
  looked up in the corpus' per-task selector table, defaulting to the first
  alternative.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

from eventbench.domain import (
    CaptionedSegments,
    GroundedMcq,
    GroundTruth,
    IntervalSet,
    McqAnswer,
    SingleInterval,
    TaskKind,
    TimeInterval,
    TimePoint,
)


class MissingPlaceholder(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name


class VariantMismatch(TypeError):
    """Ground-truth variant does not fit the task's canonical response."""


@dataclass(frozen=True)
class TemplateId:
    """Address of one template: ``benchmark`` variant 0 or ``tuning`` variants 0-5."""

    task: TaskKind
    family: str = "benchmark"
    variant: int = 0


_TOKEN_RE = re.compile(r"\{(\w+)\}")


def _load_corpus() -> dict:
    text = resources.files("eventbench.data").joinpath("templates.json").read_text(encoding="utf-8")
    return json.loads(text)


_CORPUS = _load_corpus()

TEMPLATE_VERSION: int = _CORPUS["version"]


def format_time(t: float) -> str:
    """One fractional digit, no unit: 10.2 -> "10.2", 90 -> "90.0"."""
    if not (math.isfinite(t) and t >= 0):
        raise ValueError(f"time must be finite and non-negative, got {t}")
    return f"{t:.1f}"


def template_text(tid: TemplateId) -> str:
    if tid.family == "benchmark":
        if tid.variant != 0:
            raise ValueError(f"benchmark templates only have variant 0, got {tid.variant}")
        return _CORPUS["benchmark"][tid.task.value]
    if tid.family == "tuning":
        variants = _CORPUS["tuning"].get(tid.task.value)
        if variants is None:
            raise ValueError(f"task {tid.task.value} has no tuning templates")
        if not 0 <= tid.variant < len(variants):
            raise ValueError(f"tuning variant must be in [0, {len(variants) - 1}], got {tid.variant}")
        return variants[tid.variant]
    raise ValueError(f"unknown template family {tid.family!r}")


def _alternative(task: TaskKind, placeholders: Mapping) -> str:
    choices = _CORPUS["alternatives"][task.value]
    selector = _CORPUS["alternative_selectors"].get(task.value, {})
    domain = placeholders.get("domain")
    index = selector.get(domain, 0) if isinstance(domain, str) else 0
    return choices[index]


def render_instruction(tid: TemplateId, placeholders: Mapping) -> str:
    """Substitute placeholders into the stored template text.

    Raises :class:`MissingPlaceholder` when the template demands a name the
    mapping does not provide (including exhausted ``times``/``options`` lists).
    """
    text = template_text(tid)
    times = list(placeholders.get("times", ()))
    options = list(placeholders.get("options", ()))
    time_cursor = 0
    option_cursor = 0

    def substitute(match: re.Match) -> str:
        nonlocal time_cursor, option_cursor
        name = match.group(1)
        if name == "time":
            if time_cursor >= len(times):
                raise MissingPlaceholder("times")
            value = format_time(float(times[time_cursor]))
            time_cursor += 1
            return value
        if name == "option":
            if option_cursor >= len(options):
                raise MissingPlaceholder("options")
            value = str(options[option_cursor])
            option_cursor += 1
            return value
        if name == "alt":
            return _alternative(tid.task, placeholders)
        if name not in placeholders:
            raise MissingPlaceholder(name)
        return str(placeholders[name])

    return _TOKEN_RE.sub(substitute, text)


def _span_text(iv: TimeInterval) -> str:
    return f"{format_time(iv.start)} - {format_time(iv.end)}"


def _span_list_text(intervals: Sequence[TimeInterval]) -> str:
    spans = [_span_text(iv) for iv in intervals]
    if len(spans) == 1:
        return spans[0]
    if len(spans) == 2:
        return f"{spans[0]} and {spans[1]}"
    return ", ".join(spans[:-1]) + f", and {spans[-1]}"


def render_response(task: TaskKind, gt: GroundTruth | TimePoint) -> str:
    """Canonical response text for a ground truth; the parser round-trips it.

    Highlight-detection responses carry a single timestamp, so this accepts a
    :class:`TimePoint` for that task.
    """
    formats = _CORPUS["responses"]
    if task in (TaskKind.RAR, TaskKind.ECA, TaskKind.RVQ):
        if not isinstance(gt, McqAnswer):
            raise VariantMismatch(f"{task.value} needs McqAnswer, got {type(gt).__name__}")
        return formats["mcq"].format(letter=gt.letter)
    if task in (TaskKind.TVG, TaskKind.EPM):
        if not isinstance(gt, SingleInterval):
            raise VariantMismatch(f"{task.value} needs SingleInterval, got {type(gt).__name__}")
        return formats[task.value].format(spans=_span_text(gt.interval))
    if task in (TaskKind.TAL, TaskKind.EVS):
        if not isinstance(gt, IntervalSet) or not gt.intervals:
            raise VariantMismatch(f"{task.value} needs a non-empty IntervalSet")
        return formats[task.value].format(spans=_span_list_text(gt.intervals))
    if task is TaskKind.TEM:
        # the response names one matched moment, so render the first interval
        if isinstance(gt, IntervalSet) and gt.intervals:
            interval = gt.intervals[0]
        elif isinstance(gt, SingleInterval):
            interval = gt.interval
        else:
            raise VariantMismatch("tem needs SingleInterval or a non-empty IntervalSet")
        return formats["tem"].format(spans=_span_text(interval))
    if task is TaskKind.VHD:
        if isinstance(gt, TimePoint):
            return formats["vhd"].format(time=format_time(gt.seconds))
        raise VariantMismatch(f"vhd responses carry one timestamp; got {type(gt).__name__}")
    if task in (TaskKind.DVC, TaskKind.SLC):
        if not isinstance(gt, CaptionedSegments) or not gt.segments:
            raise VariantMismatch(f"{task.value} needs non-empty CaptionedSegments")
        parts = [formats["segment"].format(span=_span_text(iv), caption=caption) for iv, caption in gt.segments]
        return " ".join(parts)
    if task is TaskKind.GVQ:
        if not isinstance(gt, GroundedMcq):
            raise VariantMismatch(f"gvq needs GroundedMcq, got {type(gt).__name__}")
        return formats["gvq"].format(letter=gt.letter, spans=_span_text(gt.interval))
    raise ValueError(f"unhandled task {task!r}")
