"""Detection-stream and headcount interchange.

Detections travel as newline-delimited JSON (primary) or CSV:

    {"video_id": "V01", "frame": 0, "x": 10, "y": 20, "w": 30, "h": 40,
     "score": 0.9, "label": "person"}

Boxes are (x_min, y_min, width, height) in pixels; records carrying corner
coordinates ``x2``/``y2`` instead of ``w``/``h`` are converted on read.
An ndjson line without a ``frame`` key is a stream header carrying
``video_id``, ``fps`` and ``frame_count``.  CSV files carry the same
metadata in optional ``fps``/``frame_count`` columns.
"""

import csv
import io
import json
import logging
import math
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import Any, Literal

import numpy as np

from src.config import DEFAULT_FPS
from src.errors import (
    EmptyInput,
    FrameDomainMismatch,
    InvalidConfig,
    InvariantViolation,
    MalformedRecord,
    NegativeCount,
)

logger = logging.getLogger(__name__)

Format = Literal["ndjson", "csv"]
FORMATS: tuple[str, ...] = ("ndjson", "csv")

CSV_COLUMNS = ("video_id", "frame", "x", "y", "w", "h", "score", "label", "fps", "frame_count")
HEADCOUNT_COLUMNS = ("frame", "ground_truth", "predicted")
_DETECTION_FIELDS = ("frame", "x", "y", "w", "h", "score", "label")


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned box in pixel coordinates."""

    x_min: float
    y_min: float
    width: float
    height: float

    def __post_init__(self) -> None:
        values = (self.x_min, self.y_min, self.width, self.height)
        if not all(math.isfinite(v) for v in values):
            raise InvariantViolation(None, "box coordinates must be finite")
        if self.width <= 0 or self.height <= 0:
            raise InvariantViolation(None, f"box size must be positive, got {self.width}x{self.height}")
        if self.x_min < 0 or self.y_min < 0:
            raise InvariantViolation(None, f"box origin must be non-negative, got ({self.x_min}, {self.y_min})")

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "BoundingBox":
        return cls(x1, y1, x2 - x1, y2 - y1)

    @property
    def x_max(self) -> float:
        return self.x_min + self.width

    @property
    def y_max(self) -> float:
        return self.y_min + self.height

    def centroid(self) -> tuple[float, float]:
        return (self.x_min + self.width / 2, self.y_min + self.height / 2)


@dataclass(frozen=True, slots=True)
class Detection:
    """One bounding box reported by the detector for one frame."""

    frame_index: int
    box: BoundingBox
    score: float
    label: str

    def __post_init__(self) -> None:
        if self.frame_index < 0:
            raise InvariantViolation(None, f"frame index must be non-negative, got {self.frame_index}")
        if not 0.0 <= self.score <= 1.0:
            raise InvariantViolation(None, f"score must lie in [0, 1], got {self.score}")
        if not self.label:
            raise InvariantViolation(None, "label must not be empty")


@dataclass(frozen=True)
class DetectionStream:
    """Per-frame detections of one video, sorted by frame index.

    Attributes:
        video_id: Identifier of the source video.
        fps: Frame rate of the source video.
        frame_count: Number of frames in the video, at least max frame index + 1.
        detections: Detections in non-decreasing frame order.
    """

    video_id: str
    fps: float = DEFAULT_FPS
    frame_count: int = 0
    detections: tuple[Detection, ...] = ()

    def __post_init__(self) -> None:
        if not self.fps > 0:
            raise InvariantViolation(None, f"fps must be positive, got {self.fps}")
        if self.frame_count < 0:
            raise InvariantViolation(None, "frame_count must be non-negative")
        previous = -1
        for det in self.detections:
            if det.frame_index < previous:
                raise InvariantViolation(None, "detections must be sorted by frame index")
            previous = det.frame_index
        if previous >= self.frame_count:
            raise InvariantViolation(
                None, f"frame {previous} lies outside frame_count {self.frame_count}"
            )

    def __len__(self) -> int:
        return len(self.detections)

    def frame_indices(self) -> np.ndarray:
        return np.fromiter((d.frame_index for d in self.detections), dtype=np.int64, count=len(self))

    def centroids(self) -> np.ndarray:
        """(N, 2) array of detection centroids in stream order."""
        out = np.empty((len(self), 2), dtype=np.float64)
        for i, det in enumerate(self.detections):
            out[i] = det.box.centroid()
        return out

    def frames(self) -> Iterator[tuple[int, tuple[Detection, ...]]]:
        """Yield (frame_index, detections) for every frame holding at least one detection."""
        start = 0
        dets = self.detections
        while start < len(dets):
            frame = dets[start].frame_index
            end = start
            while end < len(dets) and dets[end].frame_index == frame:
                end += 1
            yield frame, dets[start:end]
            start = end


@dataclass(frozen=True)
class HeadcountSeries:
    """Ground-truth and predicted headcounts keyed by frame.

    ``predicted`` holds None where no prediction has been joined yet.
    """

    frames: tuple[int, ...] = ()
    ground_truth: tuple[int, ...] = ()
    predicted: tuple[int | None, ...] = ()

    def __post_init__(self) -> None:
        if not len(self.frames) == len(self.ground_truth) == len(self.predicted):
            raise InvariantViolation(None, "headcount columns must share one frame domain")
        if any(b <= a for a, b in zip(self.frames, self.frames[1:])):
            raise InvariantViolation(None, "headcount frames must be strictly increasing")
        if any(v < 0 for v in self.ground_truth) or any(
            v is not None and v < 0 for v in self.predicted
        ):
            raise NegativeCount(None, "headcounts must be non-negative")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def has_predictions(self) -> bool:
        return all(v is not None for v in self.predicted)

    def restrict(self, start: int, end: int) -> "HeadcountSeries":
        """Frames in the inclusive range [start, end]."""
        keep = [i for i, f in enumerate(self.frames) if start <= f <= end]
        return HeadcountSeries(
            frames=tuple(self.frames[i] for i in keep),
            ground_truth=tuple(self.ground_truth[i] for i in keep),
            predicted=tuple(self.predicted[i] for i in keep),
        )


@dataclass
class _Collected:
    video_id: str
    records: list[Detection] = field(default_factory=list)
    fps: float | None = None
    frame_count: int | None = None


def resolve_format(fmt: str | None, name: str | None = None) -> Format:
    """Pick the interchange format from an explicit choice or a file suffix."""
    if fmt is None:
        fmt = "csv" if name and name.lower().endswith(".csv") else "ndjson"
    if fmt not in FORMATS:
        raise InvalidConfig(f"unknown format {fmt!r}, expected one of {FORMATS}", field="fmt")
    return fmt  # type: ignore[return-value]


def _number(raw: Any, name: str, line: int) -> float:
    if isinstance(raw, bool) or raw is None or raw == "":
        raise MalformedRecord(line, f"{name} is missing or not a number")
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise MalformedRecord(line, f"{name}={raw!r} is not a number") from None
    if not math.isfinite(value):
        raise InvariantViolation(line, f"{name} must be finite")
    return value


def _integer(raw: Any, name: str, line: int) -> int:
    if isinstance(raw, int) and not isinstance(raw, bool):
        return raw
    if isinstance(raw, str):
        try:
            return int(raw.strip())
        except ValueError:
            pass
    raise MalformedRecord(line, f"{name}={raw!r} is not an integer")


def _record_to_detection(rec: Mapping[str, Any], line: int) -> tuple[str, Detection]:
    video_id = rec.get("video_id")
    if not isinstance(video_id, str) or not video_id:
        raise MalformedRecord(line, "video_id is missing")
    label = rec.get("label")
    if not isinstance(label, str):
        raise MalformedRecord(line, "label is missing")

    frame = _integer(rec.get("frame"), "frame", line)
    x = _number(rec.get("x"), "x", line)
    y = _number(rec.get("y"), "y", line)
    if rec.get("w") not in (None, "") or rec.get("h") not in (None, ""):
        w = _number(rec.get("w"), "w", line)
        h = _number(rec.get("h"), "h", line)
    elif rec.get("x2") not in (None, "") and rec.get("y2") not in (None, ""):
        w = _number(rec.get("x2"), "x2", line) - x
        h = _number(rec.get("y2"), "y2", line) - y
    else:
        raise MalformedRecord(line, "record needs w/h or x2/y2")
    score = _number(rec.get("score"), "score", line)

    try:
        return video_id, Detection(frame, BoundingBox(x, y, w, h), score, label)
    except InvariantViolation as e:
        raise InvariantViolation(line, e.reason) from None


def _apply_meta(group: _Collected, fps: Any, frame_count: Any, line: int) -> None:
    if fps not in (None, ""):
        value = _number(fps, "fps", line)
        if group.fps is not None and group.fps != value:
            raise InvariantViolation(line, f"conflicting fps for video {group.video_id}")
        group.fps = value
    if frame_count not in (None, ""):
        value = _integer(frame_count, "frame_count", line)
        if group.frame_count is not None and group.frame_count != value:
            raise InvariantViolation(line, f"conflicting frame_count for video {group.video_id}")
        group.frame_count = value


def _collect(data: bytes, fmt: Format) -> tuple[dict[str, _Collected], bool]:
    """Group records by video. Returns the groups and whether any header was seen."""
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as e:
        raise MalformedRecord(None, f"input is not UTF-8: {e}") from None

    groups: dict[str, _Collected] = {}
    saw_header = False

    def group_for(video_id: str) -> _Collected:
        if video_id not in groups:
            groups[video_id] = _Collected(video_id)
        return groups[video_id]

    if fmt == "ndjson":
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecord(line_no, f"invalid JSON: {e.msg}") from None
            if not isinstance(rec, dict):
                raise MalformedRecord(line_no, "expected a JSON object")
            if "frame" not in rec:
                video_id = rec.get("video_id")
                if not isinstance(video_id, str) or not video_id:
                    raise MalformedRecord(line_no, "header line is missing video_id")
                saw_header = True
                _apply_meta(group_for(video_id), rec.get("fps"), rec.get("frame_count"), line_no)
                continue
            video_id, det = _record_to_detection(rec, line_no)
            group = group_for(video_id)
            group.records.append(det)
    else:
        reader = csv.DictReader(io.StringIO(text, newline=""))
        if reader.fieldnames is None:
            return groups, False
        saw_header = True
        missing = {"video_id", "frame", "x", "y", "score", "label"} - set(reader.fieldnames)
        if missing:
            raise MalformedRecord(1, f"CSV header lacks columns {sorted(missing)}")
        for rec in reader:
            line_no = reader.line_num
            if None in rec:
                raise MalformedRecord(line_no, "row has more fields than the header")
            if all(rec.get(k) in (None, "") for k in _DETECTION_FIELDS):
                # metadata row of a video without detections
                video_id = rec.get("video_id")
                if not video_id:
                    raise MalformedRecord(line_no, "metadata row is missing video_id")
                _apply_meta(group_for(video_id), rec.get("fps"), rec.get("frame_count"), line_no)
                continue
            video_id, det = _record_to_detection(rec, line_no)
            group = group_for(video_id)
            group.records.append(det)
            _apply_meta(group, rec.get("fps"), rec.get("frame_count"), line_no)
    return groups, saw_header


def _build_stream(group: _Collected) -> DetectionStream:
    # stable sort keeps input order between detections of one frame
    records = sorted(group.records, key=lambda d: d.frame_index)
    inferred = records[-1].frame_index + 1 if records else 0
    frame_count = group.frame_count if group.frame_count is not None else inferred
    if frame_count < inferred:
        raise InvariantViolation(
            None, f"video {group.video_id}: frame_count {frame_count} < max frame + 1 ({inferred})"
        )
    return DetectionStream(
        video_id=group.video_id,
        fps=group.fps if group.fps is not None else DEFAULT_FPS,
        frame_count=frame_count,
        detections=tuple(records),
    )


def split_by_video(data: bytes, fmt: Format) -> list[DetectionStream]:
    """Parse a detection file holding any number of videos.

    Streams are returned in order of first appearance of their video_id.

    Raises:
        MalformedRecord: For unparseable rows.
        InvariantViolation: For rows breaking a box, score or frame invariant.
        EmptyInput: When the input holds neither records nor a header.
    """
    groups, saw_header = _collect(data, fmt)
    if not groups and not saw_header:
        raise EmptyInput()
    streams = [_build_stream(g) for g in groups.values()]
    logger.debug("parsed %d video(s), %d detection(s)", len(streams), sum(len(s) for s in streams))
    return streams


def parse_detections(data: bytes, fmt: Format) -> DetectionStream:
    """Parse a single-video detection file.

    A CSV file holding only its header parses to an empty stream.

    Raises:
        MalformedRecord, InvariantViolation, EmptyInput: As for split_by_video;
            InvariantViolation also when the file holds more than one video.
    """
    streams = split_by_video(data, fmt)
    if not streams:
        return DetectionStream(video_id="", fps=DEFAULT_FPS, frame_count=0)
    if len(streams) > 1:
        ids = ", ".join(s.video_id for s in streams)
        raise InvariantViolation(None, f"input holds several videos ({ids}); use split_by_video")
    return streams[0]


def _needs_header(stream: DetectionStream) -> bool:
    if not stream.detections:
        return bool(stream.video_id)
    inferred = stream.detections[-1].frame_index + 1
    return stream.fps != DEFAULT_FPS or stream.frame_count != inferred


def _ndjson_lines(stream: DetectionStream, extra: Sequence[Mapping[str, Any]] | None) -> Iterator[str]:
    if _needs_header(stream):
        yield json.dumps(
            {"video_id": stream.video_id, "fps": stream.fps, "frame_count": stream.frame_count}
        )
    for i, det in enumerate(stream.detections):
        rec: dict[str, Any] = {
            "video_id": stream.video_id,
            "frame": det.frame_index,
            "x": det.box.x_min,
            "y": det.box.y_min,
            "w": det.box.width,
            "h": det.box.height,
            "score": det.score,
            "label": det.label,
        }
        if extra is not None:
            rec.update(extra[i])
        yield json.dumps(rec)


def _csv_rows(stream: DetectionStream, extra: Sequence[Mapping[str, Any]] | None) -> Iterator[dict[str, Any]]:
    if _needs_header(stream) and not stream.detections:
        yield {"video_id": stream.video_id, "fps": repr(stream.fps), "frame_count": stream.frame_count}
    for i, det in enumerate(stream.detections):
        # repr() keeps every float bit so a re-parse is exact
        row: dict[str, Any] = {
            "video_id": stream.video_id,
            "frame": det.frame_index,
            "x": repr(det.box.x_min),
            "y": repr(det.box.y_min),
            "w": repr(det.box.width),
            "h": repr(det.box.height),
            "score": repr(det.score),
            "label": det.label,
            "fps": repr(stream.fps),
            "frame_count": stream.frame_count,
        }
        if extra is not None:
            row.update({k: json.dumps(v) if not isinstance(v, str) else v for k, v in extra[i].items()})
        yield row


def write_streams(
    streams: Sequence[DetectionStream],
    fmt: Format,
    extra: Sequence[Sequence[Mapping[str, Any]]] | None = None,
) -> bytes:
    """Serialize several videos into one file.

    Args:
        streams: Streams to write, in order.
        fmt: "ndjson" or "csv".
        extra: Optional per-stream, per-detection extra fields (for example a
            provenance ``tag``); parse_detections ignores them.
    """
    if fmt == "ndjson":
        lines: list[str] = []
        for k, stream in enumerate(streams):
            lines.extend(_ndjson_lines(stream, extra[k] if extra is not None else None))
        return "".join(line + "\n" for line in lines).encode("utf-8")

    extra_columns: list[str] = []
    if extra is not None:
        for per_stream in extra:
            for fields in per_stream:
                extra_columns.extend(k for k in fields if k not in extra_columns)
    buf = io.StringIO(newline="")
    writer = csv.DictWriter(buf, fieldnames=[*CSV_COLUMNS, *extra_columns], lineterminator="\r\n")
    writer.writeheader()
    for k, stream in enumerate(streams):
        writer.writerows(_csv_rows(stream, extra[k] if extra is not None else None))
    return buf.getvalue().encode("utf-8")


def write_detections(
    stream: DetectionStream,
    fmt: Format,
    extra: Sequence[Mapping[str, Any]] | None = None,
) -> bytes:
    """Serialize one stream so that parse_detections reproduces it exactly."""
    return write_streams([stream], fmt, [extra] if extra is not None else None)


def filter_by_label(stream: DetectionStream, label: str) -> DetectionStream:
    """Keep only detections carrying ``label``; frame_count and fps are unchanged."""
    return replace(stream, detections=tuple(d for d in stream.detections if d.label == label))


def apply_score_threshold(stream: DetectionStream, threshold: float) -> DetectionStream:
    """Keep detections scoring at least ``threshold``."""
    return replace(stream, detections=tuple(d for d in stream.detections if d.score >= threshold))


def parse_headcounts(data: bytes) -> HeadcountSeries:
    """Parse a ``frame,ground_truth,predicted`` CSV; blank predictions stay absent.

    Raises:
        MalformedRecord: For unparseable rows or duplicate frames.
        NegativeCount: For negative counts.
    """
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as e:
        raise MalformedRecord(None, f"input is not UTF-8: {e}") from None
    if not text.strip():
        return HeadcountSeries()

    reader = csv.DictReader(io.StringIO(text, newline=""))
    fields = reader.fieldnames or []
    if "frame" not in fields or "ground_truth" not in fields:
        raise MalformedRecord(1, "headcount CSV needs frame and ground_truth columns")

    rows: dict[int, tuple[int, int | None]] = {}
    for rec in reader:
        line = reader.line_num
        frame = _integer(rec.get("frame"), "frame", line)
        if frame < 0:
            raise MalformedRecord(line, f"frame must be non-negative, got {frame}")
        gt = _integer(rec.get("ground_truth"), "ground_truth", line)
        raw_pred = (rec.get("predicted") or "").strip()
        pred = _integer(raw_pred, "predicted", line) if raw_pred else None
        if gt < 0 or (pred is not None and pred < 0):
            raise NegativeCount(line, "headcounts must be non-negative")
        if frame in rows:
            raise MalformedRecord(line, f"duplicate frame {frame}")
        rows[frame] = (gt, pred)

    frames = tuple(sorted(rows))
    return HeadcountSeries(
        frames=frames,
        ground_truth=tuple(rows[f][0] for f in frames),
        predicted=tuple(rows[f][1] for f in frames),
    )


def write_headcounts(series: HeadcountSeries) -> bytes:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(HEADCOUNT_COLUMNS)
    for frame, gt, pred in zip(series.frames, series.ground_truth, series.predicted):
        writer.writerow([frame, gt, "" if pred is None else pred])
    return buf.getvalue().encode("utf-8")


def join_predictions(series: HeadcountSeries, counts: Sequence[int]) -> HeadcountSeries:
    """Fill the predicted column from per-frame counts indexed by frame.

    Raises:
        FrameDomainMismatch: If a ground-truth frame has no count.
    """
    outside = [f for f in series.frames if f >= len(counts)]
    if outside:
        raise FrameDomainMismatch(
            outside[0], outside[-1], f"ground truth extends past the stream's {len(counts)} frames"
        )
    return replace(series, predicted=tuple(int(counts[f]) for f in series.frames))
