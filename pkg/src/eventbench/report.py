"""Aggregate per-sample scores into sub-task, task, and capability tables.

Aggregation is a chain of unweighted means: sample -> sub-task (task-source
pair) -> task (over that task's sources) -> capability (over that
capability's tasks). Internal values stay at full precision; rounding to one
decimal (percent scale) happens only at emission.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from eventbench.domain import Capability, Sample, ScoreRecord, TaskKind

# Table layout: capability groups in presentation order, with dense
# captioning split into boundary F1 and caption similarity columns.
TASK_ORDER = [
    TaskKind.RAR,
    TaskKind.ECA,
    TaskKind.RVQ,
    TaskKind.TVG,
    TaskKind.EPM,
    TaskKind.TAL,
    TaskKind.EVS,
    TaskKind.VHD,
    TaskKind.DVC,
    TaskKind.SLC,
    TaskKind.TEM,
    TaskKind.GVQ,
]

PRIMARY_METRIC = {
    Capability.REFERRING: "acc",
    Capability.GROUNDING: "f1",
    Capability.DENSE_CAPTIONING: "f1",
    Capability.COMPLEX: "recall",
}

CAPABILITY_AGGREGATES = [
    ("acc_ref", Capability.REFERRING, "acc"),
    ("f1_gnd", Capability.GROUNDING, "f1"),
    ("f1_cap", Capability.DENSE_CAPTIONING, "f1"),
    ("sim_cap", Capability.DENSE_CAPTIONING, "sim"),
    ("rec_com", Capability.COMPLEX, "recall"),
]


class UnknownSample(KeyError):
    def __init__(self, sample_id: str):
        super().__init__(sample_id)
        self.sample_id = sample_id


@dataclass(frozen=True)
class AggregateReport:
    sub_task_means: dict[tuple[TaskKind, str], dict[str, float]] = field(default_factory=dict)
    task_means: dict[TaskKind, dict[str, float]] = field(default_factory=dict)
    capabilities: dict[str, float] = field(default_factory=dict)
    sample_counts: dict[tuple[TaskKind, str], int] = field(default_factory=dict)


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def _mean_of_dicts(groups: Sequence[dict[str, float]]) -> dict[str, float]:
    keys: set[str] = set()
    for group in groups:
        keys.update(group)
    return {key: _mean([g[key] for g in groups if key in g]) for key in keys}


def aggregate(records: Iterable[ScoreRecord], manifest: Iterable[Sample]) -> AggregateReport:
    """Fold score records into the report hierarchy.

    Every record's sample_id must resolve in the manifest; a missing id
    raises :class:`UnknownSample`.
    """
    index = {sample.id: sample for sample in manifest}
    by_subtask: dict[tuple[TaskKind, str], list[dict[str, float]]] = {}
    for record in records:
        sample = index.get(record.sample_id)
        if sample is None:
            raise UnknownSample(record.sample_id)
        by_subtask.setdefault((sample.task, sample.source), []).append(record.values)

    sub_task_means = {key: _mean_of_dicts(values) for key, values in by_subtask.items()}
    sample_counts = {key: len(values) for key, values in by_subtask.items()}

    by_task: dict[TaskKind, list[dict[str, float]]] = {}
    for (task, _), means in sorted(sub_task_means.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
        by_task.setdefault(task, []).append(means)
    task_means = {task: _mean_of_dicts(groups) for task, groups in by_task.items()}

    capabilities: dict[str, float] = {}
    for name, capability, metric in CAPABILITY_AGGREGATES:
        values = [
            task_means[task][metric]
            for task in TASK_ORDER
            if task.capability is capability and task in task_means and metric in task_means[task]
        ]
        if values:
            capabilities[name] = _mean(values)

    return AggregateReport(sub_task_means, task_means, capabilities, sample_counts)


def per_threshold_table(
    records: Iterable[ScoreRecord],
    manifest: Iterable[Sample],
    task: TaskKind,
    thresholds: Sequence[float] = (0.1, 0.3, 0.5, 0.7),
) -> dict[str, dict[str, float]]:
    """Per-source and overall rows of metric@threshold columns plus their mean.

    Only defined for tasks scored across IoU thresholds. The ``mean`` column
    is the arithmetic mean of the threshold columns.
    """
    metric = PRIMARY_METRIC[task.capability]
    if task in (TaskKind.EVS, TaskKind.VHD) or task.capability is Capability.REFERRING:
        raise ValueError(f"task {task.value} is not scored per IoU threshold")
    report = aggregate(records, manifest)
    rows: dict[str, dict[str, float]] = {}
    for (row_task, source), means in sorted(report.sub_task_means.items(), key=lambda kv: kv[0][1]):
        if row_task is task:
            rows[source] = {f"{metric}@{t:g}": means[f"{metric}@{t:g}"] for t in thresholds}
    if task in report.task_means:
        means = report.task_means[task]
        rows["all"] = {f"{metric}@{t:g}": means[f"{metric}@{t:g}"] for t in thresholds}
    for row in rows.values():
        row["mean"] = _mean(list(row.values()))
    return rows


def _format_cell(value: float | None) -> str:
    return "--" if value is None else f"{100.0 * value:.1f}"


def _table_cells(report: AggregateReport) -> tuple[list[str], list[str]]:
    headers = []
    cells = []
    for task in TASK_ORDER:
        metric = PRIMARY_METRIC[task.capability]
        means = report.task_means.get(task, {})
        headers.append(f"{task.value.upper()}_{metric}")
        cells.append(_format_cell(means.get(metric)))
        if task.capability is Capability.DENSE_CAPTIONING:
            headers.append(f"{task.value.upper()}_sim")
            cells.append(_format_cell(means.get("sim")))
    return headers, cells


def emit(report: AggregateReport, format: str = "markdown", label: str = "run") -> str:
    """Render the task table plus capability aggregates. One decimal, percent scale."""
    headers, cells = _table_cells(report)
    cap_headers = [name for name, _, _ in CAPABILITY_AGGREGATES]
    cap_cells = [_format_cell(report.capabilities.get(name)) for name in cap_headers]

    if format == "markdown":
        lines = [
            "| " + " | ".join(["run", *headers]) + " |",
            "|" + "---|" * (len(headers) + 1),
            "| " + " | ".join([label, *cells]) + " |",
            "",
            "| " + " | ".join(["run", *cap_headers]) + " |",
            "|" + "---|" * (len(cap_headers) + 1),
            "| " + " | ".join([label, *cap_cells]) + " |",
        ]
        return "\n".join(lines) + "\n"
    if format == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(["run", *headers, *cap_headers])
        writer.writerow([label, *cells, *cap_cells])
        return buffer.getvalue()
    raise ValueError(f"unknown format {format!r}")
