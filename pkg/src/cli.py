"""Command-line interface: ``sdtransit {validate|filter|assess|evaluate|simulate|sweep|report}``.

Exit codes: 0 success, 1 internal error, 2 invalid data, 3 I/O error,
4 invalid config.
"""

import argparse
import csv
import io
import json
import logging
import sys
from collections.abc import Sequence
from dataclasses import asdict
from pathlib import Path
from typing import Any

from rich.console import Console
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table

from src import distancing, filter as persistence, ingest, metrics, overlay, synth
from src.config import DistancingConfig, FilterConfig, RunConfig, load_config_file
from src.errors import InvalidConfig, SdtransitError
from src.execution import read_input, run_all, write_atomic
from src.log import setup_logging, stderr_console

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1

# config field -> flag, so errors point at what the user typed
FLAG_NAMES = {
    "tolerance_px": "--tolerance-px",
    "min_persistence_frames": "--min-frames",
    "gap_frames": "--gap-frames",
    "danger_distance": "--danger-px",
    "warn_distance": "--warn-px",
    "eps": "--eps",
    "min_pts": "--min-pts",
    "score_threshold": "--score-threshold",
    "label": "--label",
    "frames": "--frames",
    "workers": "--workers",
    "fmt": "--format",
    "preset": "--preset",
    "canvas": "--canvas",
    "video_id": "--video-id",
    "after": "--after",
    "ground_truth": "--ground-truth",
}

_FILTER_ARGS = {
    "tolerance_px": "tolerance_px",
    "min_frames": "min_persistence_frames",
    "gap_frames": "gap_frames",
    "allow_out_of_range": "allow_out_of_range",
}
_DISTANCING_ARGS = {
    "danger_px": "danger_distance",
    "warn_px": "warn_distance",
    "eps": "eps",
    "min_pts": "min_pts",
}
_RUN_ARGS = {
    "score_threshold": "score_threshold",
    "label": "label",
    "workers": "workers",
    "format": "fmt",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(InvalidConfig.exit_code, f"{self.prog}: error: {message}\n")


def _frame_range(text: str) -> tuple[int, int]:
    try:
        start, end = (int(v) for v in text.split(".."))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START..END, got {text!r}") from None
    return start, end


def _canvas(text: str) -> tuple[int, int]:
    try:
        width, height = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None
    if width <= 0 or height <= 0:
        raise argparse.ArgumentTypeError("canvas dimensions must be positive")
    return width, height


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML file with [run], [filter], [distancing] tables")
    common.add_argument("--log-level", help="log level (default: $SDTRANSIT_LOG or WARNING)")
    common.add_argument("--quiet", action="store_true", help="suppress console summaries")
    common.add_argument("--workers", type=int, help="videos processed concurrently")
    common.add_argument("--format", choices=ingest.FORMATS, help="stream format (default: from file suffix)")

    stream = argparse.ArgumentParser(add_help=False)
    stream.add_argument("input", help="detection stream file, or - for stdin")
    stream.add_argument("--score-threshold", type=float, help="drop detections scoring below this (default 0.5)")
    stream.add_argument("--label", help="detector class to analyse (default: person)")

    filt = argparse.ArgumentParser(add_help=False)
    filt.add_argument("--tolerance-px", type=float, help="per-axis centroid tolerance (default 10)")
    filt.add_argument("--min-frames", type=int, help="appearances needed to keep a track (default 40)")
    filt.add_argument("--gap-frames", type=int, help="longest unseen gap before a track closes (default 8)")
    filt.add_argument("--allow-out-of-range", action="store_true", default=None,
                      help="accept --min-frames outside [4, 300]")

    dist = argparse.ArgumentParser(add_help=False)
    dist.add_argument("--danger-px", type=float, help="nearest-neighbour distance for danger (default 60)")
    dist.add_argument("--warn-px", type=float, help="nearest-neighbour distance for warning (default 120)")
    dist.add_argument("--eps", type=float, help="DBSCAN radius (default: --warn-px)")
    dist.add_argument("--min-pts", type=int, help="DBSCAN core-point threshold (default 2)")

    parser = _Parser(prog="sdtransit", description="Passenger social-distancing analytics for onboard CCTV detections")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", parents=[common, stream], help="check a detection file")
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("filter", parents=[common, stream, filt], help="drop short-lived tracks")
    p.add_argument("-o", "--output", default="-", help="filtered stream (default: stdout)")
    p.add_argument("--report", type=Path, help="write the filter report JSON here")
    p.set_defaults(handler=cmd_filter)

    p = sub.add_parser("assess", parents=[common, stream, dist], help="per-frame distancing tiers")
    p.add_argument("-o", "--output", default="-", help="assessment ndjson (default: stdout)")
    p.add_argument("--overlay-dir", type=Path, help="write one SVG per frame here")
    p.add_argument("--canvas", type=_canvas, default=overlay.DEFAULT_CANVAS, help="overlay size WIDTHxHEIGHT")
    p.set_defaults(handler=cmd_assess)

    p = sub.add_parser("evaluate", parents=[common], help="headcount relative change against ground truth")
    p.add_argument("--ground-truth", required=True, type=Path, help="frame,ground_truth,predicted CSV")
    p.add_argument("--predictions", help="stream whose headcount is evaluated (default: CSV predicted column)")
    p.add_argument("--after", help="filtered stream for a before/after comparison")
    p.add_argument("--video-id", help="video to evaluate when the stream holds several")
    p.add_argument("--frames", type=_frame_range, help="restrict to frames START..END (inclusive)")
    p.add_argument("--mode", choices=("all", "constant"), default="all",
                   help="all frames, or the longest constant-ground-truth run")
    p.add_argument("--score-threshold", type=float)
    p.add_argument("--label")
    p.add_argument("-o", "--output", default="-", help="report JSON (default: stdout)")
    p.add_argument("--csv", type=Path, help="per-frame CSV for plotting")
    p.add_argument("--plot", type=Path, help="relative-change SVG plot")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic scenario")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--preset", help=f"one of {sorted(synth.scenario_presets())}")
    source.add_argument("--scenario-file", type=Path, help="TOML scenario description")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("-o", "--output-dir", type=Path, required=True)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common, stream], help="filter outcome over a tolerance/K grid")
    p.add_argument("--ground-truth", type=Path, help="headcount CSV for mean abs RC per point")
    p.add_argument("--tolerances", type=_float_list, default=[10.0, 15.0])
    p.add_argument("--min-frames-grid", type=_int_list, default=[4, 10, 20, 40, 80, 160, 300])
    p.add_argument("--gap-frames", type=int)
    p.add_argument("-o", "--output", default="-", help="CSV table (default: stdout)")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("report", parents=[common, stream, filt, dist], help="threshold, filter, assess and evaluate")
    p.add_argument("--ground-truth", type=Path, help="headcount CSV (single-video input only)")
    p.add_argument("-o", "--output", default="-", help="report JSON (default: stdout)")
    p.set_defaults(handler=cmd_report)

    return parser


def _given(args: argparse.Namespace, mapping: dict[str, str]) -> dict[str, Any]:
    return {
        field: getattr(args, dest)
        for dest, field in mapping.items()
        if getattr(args, dest, None) is not None
    }


def _build(cls: type, values: dict[str, Any], table: str) -> Any:
    try:
        return cls(**values)
    except TypeError as e:
        raise InvalidConfig(f"[{table}] {e}") from e


def run_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, environment, --config file and flags (later wins)."""
    file = load_config_file(args.config) if getattr(args, "config", None) else {}
    config = _build(RunConfig, {
        **file.get("run", {}),
        **_given(args, _RUN_ARGS),
        "filter": _build(FilterConfig, {**file.get("filter", {}), **_given(args, _FILTER_ARGS)}, "filter"),
        "distancing": _build(
            DistancingConfig, {**file.get("distancing", {}), **_given(args, _DISTANCING_ARGS)}, "distancing"
        ),
    }, "run")
    if isinstance(config.frames, list):
        config.frames = tuple(config.frames)
    if getattr(args, "frames", None) is not None:
        config.frames = args.frames
    for attr, dest in (("input_path", "input"), ("output_path", "output")):
        value = getattr(args, dest, None)
        setattr(config, attr, Path(value) if value is not None else None)
    config.validate()
    return config


def _console(args: argparse.Namespace) -> Console | None:
    if args.quiet:
        return None
    # keep stdout clean when it carries data
    if getattr(args, "output", None) == "-":
        return stderr_console
    return Console()


def _load_streams(path: str | Path, config: RunConfig) -> list[ingest.DetectionStream]:
    fmt = ingest.resolve_format(config.fmt, str(path))
    return ingest.split_by_video(read_input(path), fmt)


def _prepare(stream: ingest.DetectionStream, config: RunConfig) -> ingest.DetectionStream:
    return ingest.apply_score_threshold(ingest.filter_by_label(stream, config.label), config.score_threshold)


def _single_stream(path: str, config: RunConfig, video_id: str | None) -> ingest.DetectionStream:
    streams = _load_streams(path, config)
    if video_id is not None:
        streams = [s for s in streams if s.video_id == video_id]
        if not streams:
            raise InvalidConfig(f"{path}: no video {video_id!r}", field="video_id")
    if len(streams) != 1:
        raise InvalidConfig(f"{path}: holds {len(streams)} videos, pick one with --video-id", field="video_id")
    return _prepare(streams[0], config)


def _dump_json(data: Any) -> bytes:
    return (json.dumps(data, indent=2) + "\n").encode("utf-8")


def cmd_validate(args: argparse.Namespace) -> int:
    config = run_config(args)
    streams = _load_streams(args.input, config)
    console = _console(args)
    if console is not None:
        table = Table(title=f"{args.input}: valid")
        for column in ("video", "fps", "frames", "detections", "labels"):
            table.add_column(column)
        for s in streams:
            labels = sorted({d.label for d in s.detections})
            table.add_row(s.video_id, f"{s.fps:g}", str(s.frame_count), str(len(s)), ", ".join(labels))
        console.print(table)
        console.print(
            f"[green]{len(streams)} video(s), {sum(s.frame_count for s in streams)} frame(s), "
            f"{sum(len(s) for s in streams)} detection(s)[/green]"
        )
    return EXIT_OK


def cmd_filter(args: argparse.Namespace) -> int:
    config = run_config(args)
    # output suffix picks the format; stdout follows the input
    fmt = ingest.resolve_format(config.fmt, str(args.input) if args.output == "-" else args.output)
    streams = [_prepare(s, config) for s in _load_streams(args.input, config)]
    results = run_all(streams, lambda s: persistence.apply_filter(s, config.filter), config.workers)

    write_atomic(args.output, ingest.write_streams([out for out, _ in results], fmt))
    if args.report is not None:
        reports = [persistence.report_to_json(r, s.video_id) for s, (_, r) in zip(streams, results)]
        write_atomic(args.report, _dump_json(reports))

    console = _console(args)
    if console is not None:
        for s, (_, report) in zip(streams, results):
            console.print(
                f"{s.video_id}: removed {report.removed_detection_count} detection(s) in "
                f"{len(report.suppressed_track_ids)} suppressed track(s); "
                f"{len(report.confirmed_track_ids)} track(s) kept"
            )
    return EXIT_OK


def cmd_assess(args: argparse.Namespace) -> int:
    config = run_config(args)
    streams = [_prepare(s, config) for s in _load_streams(args.input, config)]
    results = run_all(streams, lambda s: distancing.assess_stream(s, config.distancing), config.workers)

    lines = []
    for stream, assessments in zip(streams, results):
        for a in assessments:
            lines.append(json.dumps({"video_id": stream.video_id, **distancing.assessment_to_json(a)}))
    write_atomic(args.output, "".join(line + "\n" for line in lines).encode("utf-8"))

    if args.overlay_dir is not None:
        def render(pair: tuple[ingest.DetectionStream, list[distancing.FrameAssessment]]) -> int:
            stream, assessments = pair
            for (frame, dets), a in zip(stream.frames(), assessments):
                svg = overlay.render_frame_svg(a, dets, args.canvas)
                write_atomic(args.overlay_dir / overlay.overlay_name(stream.video_id, frame), svg)
            return len(assessments)

        args.overlay_dir.mkdir(parents=True, exist_ok=True)
        run_all(list(zip(streams, results)), render, config.workers)

    console = _console(args)
    if console is not None:
        table = Table(title="Social distancing")
        for column in ("video", "frames assessed", "safe", "warning", "danger", "frames with danger"):
            table.add_column(column)
        for stream, assessments in zip(streams, results):
            summary = distancing.summarize(assessments, stream.frame_count)
            tiers = summary.tier_counts
            table.add_row(
                stream.video_id, str(summary.frames_assessed), str(tiers["safe"]),
                str(tiers["warning"]), str(tiers["danger"]), str(summary.frames_with_danger),
            )
        console.print(table)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = run_config(args)
    gt = ingest.parse_headcounts(read_input(args.ground_truth))
    video_id = args.video_id or args.ground_truth.stem

    before_stream = None
    if args.predictions is not None:
        before_stream = _single_stream(args.predictions, config, args.video_id)
        video_id = before_stream.video_id
        series = ingest.join_predictions(gt, metrics.headcount(before_stream))
    elif args.after is not None:
        raise InvalidConfig("--after needs --predictions", field="after")
    else:
        series = gt

    frames = config.frames
    if frames is None and args.mode == "constant":
        frames = metrics.longest_constant_segment(gt)
        logger.info("evaluating constant ground-truth segment %d..%d", *frames)

    console = _console(args)
    if args.after is not None:
        after_stream = _single_stream(args.after, config, args.video_id)
        comparison = metrics.compare_filtered(gt, before_stream, after_stream, frames)
        write_atomic(args.output, _dump_json(metrics.comparison_to_json(comparison)))
        summaries = [("before", comparison.before), ("after", comparison.after)]
        if console is not None:
            console.print(Panel(
                f"[bold]Mean abs RC before:[/bold] {comparison.before.mean_abs_rc_pct:.2f}%\n"
                f"[bold]Mean abs RC after:[/bold] {comparison.after.mean_abs_rc_pct:.2f}%\n"
                f"[bold]Delta:[/bold] {comparison.delta_pct:+.2f} points\n"
                f"[bold]Frames with true positives removed:[/bold] "
                f"{len(comparison.true_positive_removed_frames)}",
                title=f"Evaluation {video_id}",
                border_style="blue",
            ))
    else:
        summary = metrics.evaluate(video_id, series, frames)
        write_atomic(args.output, _dump_json(metrics.summary_to_json(summary)))
        summaries = [("prediction", summary)]
        if console is not None:
            console.print(Panel(
                f"[bold]Mean abs RC:[/bold] {summary.mean_abs_rc_pct:.2f}%\n"
                f"[bold]Frames evaluated:[/bold] {summary.frames_evaluated}\n"
                f"[bold]Frames excluded (y=0, x>0):[/bold] {summary.frames_excluded}",
                title=f"Evaluation {video_id}",
                border_style="blue",
            ))

    if args.csv is not None:
        write_atomic(args.csv, metrics.summary_to_csv(summaries))
    if args.plot is not None:
        series_by_label = {
            name: metrics.RelativeChangeSeries(
                tuple(r.frame for r in s.per_frame), tuple(r.rc for r in s.per_frame)
            )
            for name, s in summaries
        }
        write_atomic(args.plot, metrics.plot_relative_change(series_by_label, title=video_id))
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    config = run_config(args)
    if args.preset is not None:
        scenario_config = synth.get_preset(args.preset, args.seed)
    else:
        scenario_config = synth.load_scenario(args.scenario_file)
        if args.seed is not None:
            scenario_config.seed = args.seed
    scenario = synth.generate(scenario_config)

    fmt = ingest.resolve_format(config.fmt)
    out = args.output_dir
    write_atomic(out / f"ground_truth.{fmt}", ingest.write_detections(scenario.ground_truth, fmt))
    write_atomic(
        out / f"noisy.{fmt}",
        ingest.write_detections(scenario.noisy, fmt, synth.tag_fields(scenario.tags)),
    )
    write_atomic(out / "headcounts.csv", ingest.write_headcounts(scenario.headcounts))

    console = _console(args)
    if console is not None:
        kinds: dict[str, int] = {}
        for tag in scenario.tags:
            kinds[tag.kind.value] = kinds.get(tag.kind.value, 0) + 1
        console.print(Panel(
            f"[bold]Scenario:[/bold] {scenario_config.video_id} (seed {scenario_config.seed})\n"
            f"[bold]Frames:[/bold] {scenario_config.frame_count}\n"
            f"[bold]Ground-truth detections:[/bold] {len(scenario.ground_truth)}\n"
            f"[bold]Noisy detections:[/bold] {len(scenario.noisy)} "
            + " ".join(f"{k}={v}" for k, v in sorted(kinds.items()))
            + f"\n[bold]Output:[/bold] {out}",
            title="Simulation",
            border_style="green",
        ))
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = run_config(args)
    stream = _single_stream(args.input, config, None)
    gt = ingest.parse_headcounts(read_input(args.ground_truth)) if args.ground_truth else None
    gap = config.filter.gap_frames
    points = persistence.sweep(stream, gt, args.tolerances, args.min_frames_grid, gap)

    buf = io.StringIO(newline="")
    columns = list(asdict(points[0]).keys()) if points else ["tolerance_px", "min_persistence_frames"]
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\r\n")
    writer.writeheader()
    writer.writerows(asdict(p) for p in points)
    write_atomic(args.output, buf.getvalue().encode("utf-8"))

    console = _console(args)
    if console is not None:
        table = Table(title=f"Filter sweep {stream.video_id}")
        for column in ("tolerance", "K", "tracks", "kept", "suppressed", "removed", "mean abs RC"):
            table.add_column(column)
        for p in points:
            rc = "-" if p.mean_abs_rc_pct is None else f"{p.mean_abs_rc_pct:.2f}%"
            table.add_row(
                f"{p.tolerance_px:g}", str(p.min_persistence_frames), str(p.track_count),
                str(p.confirmed), str(p.suppressed), str(p.removed_detections), rc,
            )
        console.print(table)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    config = run_config(args)
    streams = [_prepare(s, config) for s in _load_streams(args.input, config)]
    gt = ingest.parse_headcounts(read_input(args.ground_truth)) if args.ground_truth else None
    if gt is not None and len(streams) != 1:
        raise InvalidConfig("--ground-truth needs a single-video input", field="ground_truth")

    def pipeline(stream: ingest.DetectionStream) -> dict[str, Any]:
        filtered, report = persistence.apply_filter(stream, config.filter)
        assessments = distancing.assess_stream(filtered, config.distancing)
        evaluation = None
        if gt is not None:
            evaluation = metrics.compare_filtered(gt, stream, filtered, config.frames)
        return {
            "video_id": stream.video_id,
            "detections_before": len(stream),
            "detections_after": len(filtered),
            "filter": persistence.report_to_json(report),
            "distancing": distancing.summary_to_json(distancing.summarize(assessments, filtered.frame_count)),
            "evaluation": metrics.comparison_to_json(evaluation) if evaluation is not None else None,
        }

    results = run_all(streams, pipeline, config.workers)
    write_atomic(args.output, _dump_json({"videos": results}))

    console = _console(args)
    if console is not None:
        table = Table(title="sdtransit report")
        for column in ("video", "detections", "kept", "suppressed tracks", "danger frames", "RC before", "RC after"):
            table.add_column(column)
        for r in results:
            ev = r["evaluation"]
            before = f"{ev['before']['mean_abs_rc_pct']:.2f}%" if ev else "-"
            after = f"{ev['after']['mean_abs_rc_pct']:.2f}%" if ev else "-"
            table.add_row(
                r["video_id"], str(r["detections_before"]), str(r["detections_after"]),
                str(len(r["filter"]["suppressed"])), str(r["distancing"]["frames_with_danger"]),
                before, after,
            )
        console.print(table)
    return EXIT_OK


def _describe(error: SdtransitError) -> str:
    if isinstance(error, InvalidConfig) and error.field in FLAG_NAMES:
        return f"{FLAG_NAMES[error.field]}: {error}"
    return str(error)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = setup_logging(args.log_level)
    try:
        return args.handler(args)
    except SdtransitError as e:
        stderr_console.print(f"[red]error:[/red] {escape(_describe(e))}", highlight=False)
        return e.exit_code
    except Exception as e:
        stderr_console.print(f"[red]internal error:[/red] {escape(str(e))}", highlight=False)
        if level <= logging.DEBUG:
            stderr_console.print_exception()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
