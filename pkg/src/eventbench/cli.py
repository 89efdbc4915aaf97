"""Command-line entry points: parse, score, gen, render, matchdemo, run, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from eventbench import domain, matchcore, metrics, parse as parsing, report as reporting, repurpose, runner, simscore, templates
from eventbench.domain import Sample, ScoreRecord, TaskKind, TimeInterval

logger = logging.getLogger(__name__)


def _cmd_parse(args: argparse.Namespace) -> int:
    text = Path(args.infile).read_text(encoding="utf-8") if args.infile else sys.stdin.read()
    pred = parsing.parse_for_task(TaskKind(args.task), text, args.duration)
    print(json.dumps(domain.pred_to_json(pred), ensure_ascii=False))
    return 0


def _score_one(sample: Sample, raw_text: str, embedder: simscore.Embedder) -> ScoreRecord:
    pred = parsing.parse_for_task(sample.task, raw_text, sample.duration)
    values = metrics.score_sample(sample, pred)
    if sample.task in (TaskKind.DVC, TaskKind.SLC):
        gt = sample.ground_truth
        preds = list(pred.segments) if isinstance(pred, domain.CaptionedSegments) else []
        values["sim"] = simscore.sim_score(preds, list(gt.segments), simscore.SimConfig(embedder=embedder))
    return ScoreRecord(sample.id, values)


def _cmd_score(args: argparse.Namespace) -> int:
    samples = {s.id: s for s in domain.read_manifest(args.manifest)}
    records = runner.read_responses(args.responses)
    embedder: simscore.Embedder
    embedder = simscore.RemoteEmbedder(args.embed_url) if args.embed_url else simscore.HashEmbedder()
    with open(args.out, "w", encoding="utf-8") as sink:
        for record in records:
            sample = samples.get(record.sample_id)
            if sample is None:
                raise reporting.UnknownSample(record.sample_id)
            score = _score_one(sample, record.raw_text, embedder)
            sink.write(json.dumps({"sample_id": score.sample_id, "values": score.values}) + "\n")
    return 0


def _read_scores(path: str) -> list[ScoreRecord]:
    out = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                data = json.loads(line)
                out.append(ScoreRecord(data["sample_id"], data["values"]))
    return out


def _cmd_report(args: argparse.Namespace) -> int:
    samples = domain.read_manifest(args.manifest)
    records = _read_scores(args.scores)
    result = reporting.aggregate(records, samples)
    print(reporting.emit(result, format=args.format), end="")
    return 0


def _cmd_render(args: argparse.Namespace) -> int:
    placeholders = json.loads(Path(args.placeholders).read_text(encoding="utf-8")) if args.placeholders else {}
    tid = templates.TemplateId(TaskKind(args.task), family=args.family, variant=args.variant)
    print(templates.render_instruction(tid, placeholders))
    return 0


def _cmd_matchdemo(args: argparse.Namespace) -> int:
    trace = matchcore.toy_train(
        steps=args.steps,
        learning_rate=args.lr,
        seed=args.seed,
        num_frames=args.T,
        dim=args.D,
        noise=args.noise,
    )
    print("step,loss,accuracy")
    for entry in trace:
        print(f"{entry.step},{entry.loss:.6f},{entry.accuracy:.4f}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    samples = domain.read_manifest(args.manifest)
    endpoint = runner.EndpointConfig.from_json(args.endpoint)
    summary = runner.run_batch(samples, endpoint, args.out, media_dir=args.media)
    print(json.dumps({"completed": summary.completed, "failed": summary.failed, "skipped": summary.skipped}))
    return 0


# --- manifest generation -------------------------------------------------------


def _gen_meta(task: TaskKind, record: dict) -> dict:
    meta = {"duration": record.get("duration")}
    spans = record.get("spans") or ([record["span"]] if "span" in record else [])
    if "segments" in record:
        spans = [pair for pair, _ in record["segments"]]
    if spans:
        meta["event_durations"] = [end - start for start, end in spans]
        meta["num_events"] = len(spans)
        meta["num_segments"] = len(spans)
    for key in ("action_class", "summary_ratio", "highlight_ratio"):
        if key in record:
            meta[key] = record[key]
    if "action" in record and "action_class" not in record:
        meta["action_class"] = record["action"]
    return {k: v for k, v in meta.items() if v is not None}


def _interval(pair, duration: float) -> TimeInterval:
    iv = TimeInterval(float(pair[0]), float(pair[1]))
    clamped = domain.clamp_interval(iv, duration)
    if clamped != iv:
        logger.warning("clamped interval [%s, %s] into [0, %s]", iv.start, iv.end, duration)
    return clamped


def _build_sample(task: TaskKind, record: dict, source: str, rng: repurpose.Rng) -> Sample:
    """Turn one source-annotation record into a benchmark sample."""
    duration = float(record["duration"])
    tid = templates.TemplateId(task)
    ph: dict = {k: record[k] for k in ("query", "question", "action", "task", "domain") if k in record}

    if task in (TaskKind.TVG, TaskKind.EPM):
        interval = _interval(record["span"], duration)
        if task is TaskKind.EPM:
            window = repurpose.crop_video_window(duration, 300.0, rng, gt=interval)
            interval = repurpose.shift_into_window(interval, window)
            duration = window.duration
        gt: domain.GroundTruth = domain.SingleInterval(interval)
    elif task is TaskKind.TAL:
        gt = domain.IntervalSet([_interval(p, duration) for p in record["spans"]])
    elif task is TaskKind.TEM:
        ref = _interval(record["ref_span"], duration)
        ph["times"] = [ref.start, ref.end]
        gt = domain.IntervalSet([_interval(p, duration) for p in record["spans"]])
    elif task is TaskKind.ECA:
        answer = _interval(record["span"], duration)
        distracters = repurpose.gen_eca_distracters(answer, duration, rng)
        options = [answer, *distracters]
        slot = rng.integers(0, 4)
        options[0], options[slot] = options[slot], options[0]
        ph["times"] = [t for iv in options for t in (iv.start, iv.end)]
        gt = domain.McqAnswer("ABCD"[slot])
    elif task is TaskKind.RVQ:
        interval = _interval(record["span"], duration)
        letter = record["answer"]
        options = list(record["options"])
        if len(options) == 4:
            options.append("unable to answer")
        if rng.random() < 0.20:  # unanswerable share
            interval = repurpose.gen_rvq_shifted(interval, duration, rng)
            letter = "E"
        ph["times"] = [interval.start, interval.end]
        ph["options"] = options
        gt = domain.McqAnswer(letter)
    elif task is TaskKind.RAR:
        ph["times"] = [float(record["hint_time"])]
        ph["options"] = list(record["options"])
        gt = domain.McqAnswer(record["answer"])
    elif task is TaskKind.EVS:
        track = repurpose.FrameScoreTrack(record["frame_scores"], record.get("frame_rate", 1.0))
        gt = domain.IntervalSet([_interval(iv.as_pair(), duration) for iv in repurpose.evs_ground_truth(track)])
    elif task is TaskKind.VHD:
        track = repurpose.FrameScoreTrack(record["frame_scores"], record.get("frame_rate", 1.0))
        regions = [_interval(iv.as_pair(), duration) for iv in repurpose.vhd_ground_truth(track)]
        gt = domain.HighlightRegions(regions)
        ph.setdefault("query", record.get("domain", ""))
    elif task in (TaskKind.DVC, TaskKind.SLC):
        gt = domain.CaptionedSegments([(_interval(pair, duration), text) for pair, text in record["segments"]])
    elif task is TaskKind.GVQ:
        interval = _interval(record["span"], duration)
        window = repurpose.crop_video_window(duration, 150.0, rng, gt=interval)
        interval = repurpose.shift_into_window(interval, window)
        duration = window.duration
        ph["options"] = list(record["options"])
        gt = domain.GroundedMcq(record["answer"], interval)
    else:
        raise ValueError(f"unhandled task {task!r}")

    instruction = templates.render_instruction(tid, ph)
    return domain.validate_sample(
        Sample(
            id=record["id"],
            task=task,
            source=source,
            video=record.get("video", record["id"]),
            duration=duration,
            instruction=instruction,
            ground_truth=gt,
        )
    )


def _cmd_gen(args: argparse.Namespace) -> int:
    task = TaskKind(args.task)
    rules = []
    if args.rules:
        data = json.loads(Path(args.rules).read_text(encoding="utf-8"))
        rules = [repurpose.FilterRule.from_json(r) for r in data]
    kept = 0
    drops: dict[str, int] = {}
    samples = []
    with open(args.source, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            decision = repurpose.apply_filters(_gen_meta(task, record), rules)
            if not decision.keep:
                drops[decision.reason] = drops.get(decision.reason, 0) + 1
                continue
            rng = repurpose.Rng.for_sample(args.seed, record["id"])
            try:
                samples.append(_build_sample(task, record, args.source_tag, rng))
            except (repurpose.GenerationExhausted, repurpose.WindowInfeasible) as exc:
                # an infeasible record must not kill the rest of the run
                logger.warning("skipping %s: %s", record.get("id"), exc)
                drops["infeasible"] = drops.get("infeasible", 0) + 1
                continue
            kept += 1
    domain.write_manifest(samples, args.out)
    print(json.dumps({"kept": kept, "dropped": drops}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eventbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse one free-text response into a structured answer")
    p.add_argument("--task", required=True, choices=[t.value for t in TaskKind])
    p.add_argument("--duration", type=float, required=True)
    p.add_argument("--in", dest="infile", default=None, help="input file (default: stdin)")
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("score", help="score model responses against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--embed-url", default=None, help="remote embedder base URL (default: built-in fallback)")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("gen", help="repurpose source annotations into a benchmark manifest")
    p.add_argument("--source", required=True, help="source annotations (JSON lines)")
    p.add_argument("--task", required=True, choices=[t.value for t in TaskKind])
    p.add_argument("--rules", default=None, help="JSON list of pre-filter rules")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--source-tag", default="source")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("render", help="render an instruction template")
    p.add_argument("--task", required=True, choices=[t.value for t in TaskKind])
    p.add_argument("--variant", type=int, default=0)
    p.add_argument("--family", default="benchmark", choices=["benchmark", "tuning"])
    p.add_argument("--placeholders", default=None, help="JSON file of placeholder values")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("matchdemo", help="toy embedding-matching training demo (CSV trace)")
    p.add_argument("--T", type=int, default=32)
    p.add_argument("--D", type=int, default=16)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=2.0)
    p.add_argument("--noise", type=float, default=0.05)
    p.set_defaults(func=_cmd_matchdemo)

    p = sub.add_parser("run", help="query a chat endpoint for every sample in a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--endpoint", required=True, help="endpoint config JSON")
    p.add_argument("--media", default=None, help="directory of pre-extracted frames")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="aggregate scores into a results table")
    p.add_argument("--scores", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--format", default="markdown", choices=["markdown", "csv"])
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
