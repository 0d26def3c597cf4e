"""Headcount evaluation by relative change.

For a frame with ground truth y and prediction x the relative change is
``(y - x) / y``: positive for under-prediction, negative for
over-prediction (false positives).  Values are kept as fractions and only
rendered as percentages in reports.

Frames with y = 0 are special: y = x = 0 scores 0, while y = 0 < x is
undefined, excluded from the mean and counted as a false-positive-only
frame.
"""

import csv
import io
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from src.errors import EmptySeries, FrameDomainMismatch, NegativeCount
from src.ingest import DetectionStream, HeadcountSeries, join_predictions

logger = logging.getLogger(__name__)

# fixed salt keeps SVG element ids stable between runs. rcParams is
# process-global: set it here once, never per render.
SVG_SALT = "sdtransit"
matplotlib.rcParams["svg.hashsalt"] = SVG_SALT


@dataclass(frozen=True)
class RelativeChangeSeries:
    """Per-frame relative change; None marks an undefined frame (y = 0 < x)."""

    frames: tuple[int, ...]
    values: tuple[float | None, ...]

    @property
    def defined(self) -> tuple[bool, ...]:
        return tuple(v is not None for v in self.values)

    @property
    def excluded_count(self) -> int:
        return sum(v is None for v in self.values)

    @property
    def evaluated_count(self) -> int:
        return len(self.values) - self.excluded_count


@dataclass(frozen=True)
class ConstantSegment:
    """Maximal run of frames with constant ground truth (inclusive bounds)."""

    start: int
    end: int
    ground_truth: int
    modal_prediction: int | None


@dataclass(frozen=True)
class FrameRow:
    frame: int
    gt: int
    pred: int
    rc: float | None


@dataclass(frozen=True)
class EvaluationSummary:
    """Headcount accuracy of one prediction stream against ground truth."""

    video_id: str
    mean_abs_rc_pct: float
    frames_evaluated: int
    frames_excluded: int
    segments: tuple[ConstantSegment, ...]
    per_frame: tuple[FrameRow, ...]


@dataclass(frozen=True)
class FilterComparison:
    """Before/after-filter evaluation against the same ground truth.

    Attributes:
        delta_pct: after.mean_abs_rc_pct - before.mean_abs_rc_pct.
        true_positive_removed_frames: Frames where the after-count fell below
            min(before-count, ground truth).
        correct_frames_broken: Frames where before matched ground truth and
            after under-counts.
    """

    before: EvaluationSummary
    after: EvaluationSummary
    delta_pct: float
    true_positive_removed_frames: tuple[int, ...]
    correct_frames_broken: tuple[int, ...]


def relative_change(y: int, x: int) -> float | None:
    """Relative change of prediction ``x`` against ground truth ``y``.

    Returns None (undefined) when y = 0 and x > 0.
    """
    if y < 0 or x < 0:
        raise NegativeCount(None, f"counts must be non-negative, got y={y}, x={x}")
    if y == 0:
        return 0.0 if x == 0 else None
    return (y - x) / y


def relative_change_series(
    series: HeadcountSeries, frames: tuple[int, int] | None = None
) -> RelativeChangeSeries:
    """Relative change per frame, optionally restricted to an inclusive frame range.

    Raises:
        FrameDomainMismatch: If a frame has no prediction or the range
            selects no ground-truth frame.
    """
    if frames is not None:
        series = _restrict(series, frames)
    missing = [f for f, p in zip(series.frames, series.predicted) if p is None]
    if missing:
        raise FrameDomainMismatch(missing[0], missing[-1], "frames have no prediction")
    return RelativeChangeSeries(
        frames=series.frames,
        values=tuple(relative_change(y, x) for y, x in zip(series.ground_truth, series.predicted)),
    )


def _restrict(series: HeadcountSeries, frames: tuple[int, int]) -> HeadcountSeries:
    start, end = frames
    restricted = series.restrict(start, end)
    if not len(restricted):
        raise FrameDomainMismatch(start, end, "range selects no ground-truth frame")
    return restricted


def mean_abs_rc(series: RelativeChangeSeries) -> float:
    """Mean of |RC| over defined frames, as a percentage.

    Raises:
        EmptySeries: If no frame is defined.
    """
    values = [abs(v) for v in series.values if v is not None]
    if not values:
        raise EmptySeries()
    return float(np.mean(values)) * 100.0


def headcount_array(frame_indices: np.ndarray, frame_count: int) -> np.ndarray:
    return np.bincount(np.asarray(frame_indices, dtype=np.int64), minlength=frame_count)[:frame_count]


def headcount(stream: DetectionStream) -> np.ndarray:
    """Detections per frame for every frame in [0, frame_count)."""
    return headcount_array(stream.frame_indices(), stream.frame_count)


def constant_segments(series: HeadcountSeries) -> list[ConstantSegment]:
    """Split the series into maximal runs of equal, consecutive ground truth.

    The modal prediction of a run breaks ties towards the smaller count.
    """
    segments = []
    i = 0
    n = len(series)
    while i < n:
        j = i
        while (
            j + 1 < n
            and series.ground_truth[j + 1] == series.ground_truth[i]
            and series.frames[j + 1] == series.frames[j] + 1
        ):
            j += 1
        preds = [p for p in series.predicted[i:j + 1] if p is not None]
        modal = int(np.bincount(preds).argmax()) if preds else None
        segments.append(ConstantSegment(series.frames[i], series.frames[j], series.ground_truth[i], modal))
        i = j + 1
    return segments


def longest_constant_segment(series: HeadcountSeries) -> tuple[int, int]:
    """Frame range of the longest constant-ground-truth run (earliest on ties)."""
    segments = constant_segments(series)
    if not segments:
        raise EmptySeries("no ground-truth frames")
    best = max(segments, key=lambda s: (s.end - s.start, -s.start))
    return best.start, best.end


def evaluate(
    video_id: str, series: HeadcountSeries, frames: tuple[int, int] | None = None
) -> EvaluationSummary:
    """Evaluate a series whose predicted column is filled.

    Raises:
        FrameDomainMismatch: If the range is empty or predictions are missing.
        EmptySeries: If no frame has a defined relative change.
    """
    if frames is not None:
        series = _restrict(series, frames)
    rc = relative_change_series(series)
    pct = mean_abs_rc(rc)
    rows = tuple(
        FrameRow(f, y, x, v)  # type: ignore[arg-type]
        for f, y, x, v in zip(series.frames, series.ground_truth, series.predicted, rc.values)
    )
    logger.debug("%s: mean abs RC %.2f%% over %d frame(s)", video_id, pct, rc.evaluated_count)
    return EvaluationSummary(
        video_id=video_id,
        mean_abs_rc_pct=pct,
        frames_evaluated=rc.evaluated_count,
        frames_excluded=rc.excluded_count,
        segments=tuple(constant_segments(series)),
        per_frame=rows,
    )


def compare_filtered(
    gt: HeadcountSeries,
    before: DetectionStream,
    after: DetectionStream,
    frames: tuple[int, int] | None = None,
) -> FilterComparison:
    """Evaluate the stream before and after filtering against one ground truth.

    Raises:
        FrameDomainMismatch: If the streams disagree on frame_count or the
            ground truth reaches past them.
    """
    if before.frame_count != after.frame_count:
        lo, hi = sorted((before.frame_count, after.frame_count))
        raise FrameDomainMismatch(lo, hi - 1, "before and after streams differ in frame_count")

    before_series = join_predictions(gt, headcount(before))
    after_series = join_predictions(gt, headcount(after))
    before_eval = evaluate(before.video_id, before_series, frames)
    after_eval = evaluate(after.video_id, after_series, frames)

    removed = []
    broken = []
    for b, a in zip(before_eval.per_frame, after_eval.per_frame):
        if a.pred < min(b.pred, b.gt):
            removed.append(b.frame)
        if b.pred == b.gt and a.pred < b.gt:
            broken.append(b.frame)
    return FilterComparison(
        before=before_eval,
        after=after_eval,
        delta_pct=after_eval.mean_abs_rc_pct - before_eval.mean_abs_rc_pct,
        true_positive_removed_frames=tuple(removed),
        correct_frames_broken=tuple(broken),
    )


def summary_to_json(summary: EvaluationSummary) -> dict:
    return {
        "video_id": summary.video_id,
        "mean_abs_rc_pct": summary.mean_abs_rc_pct,
        "frames_evaluated": summary.frames_evaluated,
        "frames_excluded": summary.frames_excluded,
        "segments": [
            {"start": s.start, "end": s.end, "gt": s.ground_truth, "pred": s.modal_prediction}
            for s in summary.segments
        ],
        "per_frame": [{"frame": r.frame, "gt": r.gt, "pred": r.pred, "rc": r.rc} for r in summary.per_frame],
    }


def comparison_to_json(comparison: FilterComparison) -> dict:
    return {
        "before": summary_to_json(comparison.before),
        "after": summary_to_json(comparison.after),
        "delta_pct": comparison.delta_pct,
        "true_positive_removed_frames": list(comparison.true_positive_removed_frames),
        "correct_frames_broken": list(comparison.correct_frames_broken),
    }


def summary_to_csv(summaries: Sequence[tuple[str, EvaluationSummary]]) -> bytes:
    """Per-frame rows for plotting; ``rc`` is a percentage, blank when undefined."""
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["series", "video_id", "frame", "gt", "pred", "rc_pct"])
    for name, summary in summaries:
        for r in summary.per_frame:
            writer.writerow([name, summary.video_id, r.frame, r.gt, r.pred, "" if r.rc is None else r.rc * 100.0])
    return buf.getvalue().encode("utf-8")


def plot_relative_change(series_by_label: Mapping[str, RelativeChangeSeries], title: str = "") -> bytes:
    """Line plot of RC (%) per frame, one line per label, returned as SVG bytes."""
    fig = Figure(figsize=(8, 3))
    ax = fig.add_subplot()
    for label, series in series_by_label.items():
        values = [np.nan if v is None else v * 100.0 for v in series.values]
        ax.plot(series.frames, values, label=label, linewidth=1)
    ax.axhline(0.0, color="0.5", linewidth=0.8)
    ax.set_xlabel("frame")
    ax.set_ylabel("relative change (%)")
    if title:
        ax.set_title(title)
    if series_by_label:
        ax.legend(loc="upper right")
    fig.tight_layout()
    return svg_bytes(fig)


def svg_bytes(fig: Figure) -> bytes:
    """Save ``fig`` as SVG without a timestamp; ids use the fixed salt."""
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()
