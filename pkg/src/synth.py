"""Deterministic synthetic CCTV scenarios.

A scenario seats passengers at fixed positions and produces two streams:
the ground truth (one box per onboard passenger per frame) and a noisy
prediction carrying the failure modes seen on real onboard footage:

* detection dropout (a passenger missed in a frame),
* centroid jitter,
* transient false positives in window regions (people outside the vehicle),
* occlusion merges (two adjacent passengers reported as one box),
* a persistent false positive (a seat mistaken for a person).

Every noisy detection carries a ProvenanceTag so tests can audit the
analytics against exact expectations.

Randomness comes from ``numpy.random.Generator(PCG64)``.  The seed is fed
to a ``SeedSequence`` that spawns one independent substream per concern
(dropout, jitter, false-positive placement, scores), so results are
identical across platforms and adding false positives does not change
which passengers drop out.
"""

import csv
import enum
import io
import json
import logging
import tomllib
from collections.abc import Mapping
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import numpy as np

from src.config import DEFAULT_FPS
from src.errors import InputOutputError, InvalidConfig, MalformedRecord
from src.ingest import BoundingBox, Detection, DetectionStream, Format, HeadcountSeries

logger = logging.getLogger(__name__)

PERSON = "person"
_PLACEMENT_ATTEMPTS = 50


class TagKind(str, enum.Enum):
    TRUE_POSITIVE = "true_positive"
    TRANSIENT_FP = "transient_fp"
    PERSISTENT_FP = "persistent_fp"
    MERGED_PAIR = "merged_pair"


@dataclass(frozen=True)
class ProvenanceTag:
    """Origin of one generated detection.

    Attributes:
        kind: What produced the detection.
        passengers: Passenger indices behind it (one, or two for a merge).
        source: Transient false-positive track id, when kind is TRANSIENT_FP.
    """

    kind: TagKind
    passengers: tuple[int, ...] = ()
    source: int | None = None

    @property
    def is_true_positive(self) -> bool:
        return self.kind is TagKind.TRUE_POSITIVE

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value}
        if self.passengers:
            out["passengers"] = list(self.passengers)
        if self.source is not None:
            out["source"] = self.source
        return out

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "ProvenanceTag":
        return cls(
            kind=TagKind(data["kind"]),
            passengers=tuple(data.get("passengers", ())),
            source=data.get("source"),
        )


@dataclass(frozen=True)
class Passenger:
    """A passenger seated at ``seat`` for frames [board_frame, alight_frame)."""

    seat: int
    board_frame: int
    alight_frame: int
    p_detect: float = 1.0


@dataclass(frozen=True)
class MergeEvent:
    """Passengers ``first`` and ``second`` detected as one box for frames [start, end)."""

    first: int
    second: int
    start: int
    end: int


@dataclass(frozen=True)
class PersistentFalsePositive:
    center: tuple[float, float]
    size: tuple[float, float]


@dataclass(frozen=True)
class WindowBand:
    """Image region where transient false positives appear (a window)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float


@dataclass
class ScenarioConfig:
    """Description of one synthetic journey.

    Attributes:
        seed: 64-bit seed of the PCG64 generator.
        seats: Seat centroids in pixels; passengers refer to them by index.
        box_size: (width, height) of a passenger box.
        jitter_px: Per-axis uniform centroid noise amplitude.
        transient_fp_rate: Expected new transient false-positive tracks per frame.
        transient_fp_tracks: Exact number of transient tracks; overrides the rate.
        transient_fp_duration: Inclusive (min, max) length of a transient track.
        fp_min_separation_px: Minimum per-axis distance between a transient
            false positive and seats or temporally nearby transients.
        fp_min_separation_frames: Frame margin within which transients count as nearby.
    """

    seed: int = 0
    frame_count: int = 600
    fps: float = DEFAULT_FPS
    video_id: str = "SYN"
    canvas: tuple[int, int] = (640, 480)
    seats: tuple[tuple[float, float], ...] = ()
    box_size: tuple[float, float] = (50.0, 90.0)
    passengers: tuple[Passenger, ...] = ()
    jitter_px: float = 0.0
    transient_fp_rate: float = 0.0
    transient_fp_tracks: int | None = None
    transient_fp_duration: tuple[int, int] = (1, 3)
    transient_fp_box: tuple[float, float] = (30.0, 70.0)
    fp_min_separation_px: float = 40.0
    fp_min_separation_frames: int = 16
    window_bands: tuple[WindowBand, ...] = (WindowBand(0.0, 0.0, 640.0, 110.0),)
    merge_events: tuple[MergeEvent, ...] = ()
    persistent_fp: PersistentFalsePositive | None = None
    tp_score: float = 0.9
    fp_score_range: tuple[float, float] = (0.5, 0.85)

    def _box_fits(self, cx: float, cy: float, w: float, h: float, margin: float = 0.0) -> bool:
        width, height = self.canvas
        return (
            cx - w / 2 - margin >= 0
            and cy - h / 2 - margin >= 0
            and cx + w / 2 + margin <= width
            and cy + h / 2 + margin <= height
        )

    def validate(self) -> None:
        """Validate configuration.

        Raises:
            InvalidConfig: If configuration is invalid.
        """
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig("seed must be a 64-bit unsigned integer", field="seed")
        if self.frame_count < 0:
            raise InvalidConfig("frame_count must be non-negative", field="frame_count")
        if not self.fps > 0:
            raise InvalidConfig("fps must be positive", field="fps")
        if not self.video_id:
            raise InvalidConfig("video_id must not be empty", field="video_id")
        w, h = self.box_size
        if w <= 0 or h <= 0:
            raise InvalidConfig("box_size must be positive", field="box_size")
        if self.jitter_px < 0:
            raise InvalidConfig("jitter_px must be non-negative", field="jitter_px")
        for i, (cx, cy) in enumerate(self.seats):
            if not self._box_fits(cx, cy, w, h, self.jitter_px):
                raise InvalidConfig(f"seat {i} box does not fit inside the canvas", field="seats")

        for i, p in enumerate(self.passengers):
            if not 0 <= p.seat < len(self.seats):
                raise InvalidConfig(f"passenger {i} refers to unknown seat {p.seat}", field="passengers")
            if not 0 <= p.board_frame < p.alight_frame <= self.frame_count:
                raise InvalidConfig(
                    f"passenger {i}: need 0 <= board_frame < alight_frame <= frame_count, "
                    f"got {p.board_frame}..{p.alight_frame}",
                    field="passengers",
                )
            if not 0.0 <= p.p_detect <= 1.0:
                raise InvalidConfig(f"passenger {i}: p_detect must lie in [0, 1]", field="passengers")

        if self.transient_fp_rate < 0:
            raise InvalidConfig("transient_fp_rate must be non-negative", field="transient_fp_rate")
        if self.transient_fp_tracks is not None and self.transient_fp_tracks < 0:
            raise InvalidConfig("transient_fp_tracks must be non-negative", field="transient_fp_tracks")
        low, high = self.transient_fp_duration
        if not 1 <= low <= high:
            raise InvalidConfig("transient_fp_duration needs 1 <= min <= max", field="transient_fp_duration")
        fw, fh = self.transient_fp_box
        if fw <= 0 or fh <= 0:
            raise InvalidConfig("transient_fp_box must be positive", field="transient_fp_box")
        wants_fps = self.transient_fp_rate > 0 or bool(self.transient_fp_tracks)
        if wants_fps and not self.window_bands:
            raise InvalidConfig("transient false positives need at least one window band", field="window_bands")
        for band in self.window_bands:
            if band.x_max - band.x_min < fw or band.y_max - band.y_min < fh:
                raise InvalidConfig("window band is smaller than transient_fp_box", field="window_bands")
            cx, cy = (band.x_min + band.x_max) / 2, (band.y_min + band.y_max) / 2
            if not self._box_fits(cx, cy, band.x_max - band.x_min, band.y_max - band.y_min):
                raise InvalidConfig("window band lies outside the canvas", field="window_bands")

        for ev in self.merge_events:
            n = len(self.passengers)
            if ev.first == ev.second or not (0 <= ev.first < n and 0 <= ev.second < n):
                raise InvalidConfig("merge event needs two distinct passengers", field="merge_events")
            if not 0 <= ev.start < ev.end <= self.frame_count:
                raise InvalidConfig("merge event frame range is invalid", field="merge_events")

        if self.persistent_fp is not None:
            (cx, cy), (pw, ph) = self.persistent_fp.center, self.persistent_fp.size
            if pw <= 0 or ph <= 0 or not self._box_fits(cx, cy, pw, ph):
                raise InvalidConfig("persistent false positive box is invalid", field="persistent_fp")
        if not 0.0 <= self.tp_score <= 1.0:
            raise InvalidConfig("tp_score must lie in [0, 1]", field="tp_score")
        lo, hi = self.fp_score_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise InvalidConfig("fp_score_range must satisfy 0 <= min <= max <= 1", field="fp_score_range")


@dataclass(frozen=True)
class Scenario:
    """Generated journey: both streams, one tag per noisy detection, headcounts."""

    ground_truth: DetectionStream
    noisy: DetectionStream
    tags: tuple[ProvenanceTag, ...]
    headcounts: HeadcountSeries


@dataclass
class _Transient:
    source: int
    start: int
    end: int
    box: BoundingBox
    score: float


def _centered_box(cx: float, cy: float, w: float, h: float) -> BoundingBox:
    return BoundingBox(cx - w / 2, cy - h / 2, w, h)


def _union(a: BoundingBox, b: BoundingBox) -> BoundingBox:
    x1, y1 = min(a.x_min, b.x_min), min(a.y_min, b.y_min)
    return BoundingBox.from_corners(x1, y1, max(a.x_max, b.x_max), max(a.y_max, b.y_max))


def _place_transients(
    config: ScenarioConfig, rng: np.random.Generator, score_rng: np.random.Generator
) -> list[_Transient]:
    if config.frame_count == 0:
        return []
    if config.transient_fp_tracks is not None:
        wanted = config.transient_fp_tracks
    else:
        wanted = int(rng.poisson(config.transient_fp_rate * config.frame_count))
    if not wanted:
        return []

    fw, fh = config.transient_fp_box
    low, high = config.transient_fp_duration
    sep_px = config.fp_min_separation_px
    sep_frames = config.fp_min_separation_frames
    seats = np.array(config.seats, dtype=np.float64).reshape(-1, 2)

    placed: list[_Transient] = []
    for attempt_id in range(wanted):
        for _ in range(_PLACEMENT_ATTEMPTS):
            start = int(rng.integers(0, config.frame_count))
            end = min(start + int(rng.integers(low, high + 1)), config.frame_count)
            band = config.window_bands[int(rng.integers(len(config.window_bands)))]
            cx = float(rng.uniform(band.x_min + fw / 2, band.x_max - fw / 2))
            cy = float(rng.uniform(band.y_min + fh / 2, band.y_max - fh / 2))

            if len(seats) and (np.abs(seats - (cx, cy)).max(axis=1) <= sep_px).any():
                continue
            clash = False
            for other in placed:
                near_in_time = start <= other.end + sep_frames and other.start <= end + sep_frames
                if near_in_time:
                    ox, oy = other.box.centroid()
                    if max(abs(ox - cx), abs(oy - cy)) <= sep_px:
                        clash = True
                        break
            if clash:
                continue
            score = float(score_rng.uniform(*config.fp_score_range))
            placed.append(_Transient(len(placed), start, end, _centered_box(cx, cy, fw, fh), score))
            break
        else:
            logger.warning("could not place transient false positive %d without overlap", attempt_id)
    return placed


def generate(config: ScenarioConfig) -> Scenario:
    """Generate a scenario; identical config and seed give identical output.

    Raises:
        InvalidConfig: If the config is invalid.
    """
    config.validate()
    substreams = np.random.SeedSequence(config.seed).spawn(4)
    dropout_rng, jitter_rng, fp_rng, score_rng = (
        np.random.Generator(np.random.PCG64(s)) for s in substreams
    )
    transients = _place_transients(config, fp_rng, score_rng)
    by_frame: dict[int, list[_Transient]] = {}
    for t in transients:
        for f in range(t.start, t.end):
            by_frame.setdefault(f, []).append(t)

    w, h = config.box_size
    j = config.jitter_px
    seat_boxes = [_centered_box(cx, cy, w, h) for cx, cy in config.seats]
    persistent = (
        _centered_box(*config.persistent_fp.center, *config.persistent_fp.size)
        if config.persistent_fp is not None
        else None
    )

    truth: list[Detection] = []
    noisy: list[Detection] = []
    tags: list[ProvenanceTag] = []
    gt_counts: list[int] = []

    for f in range(config.frame_count):
        onboard = [
            i for i, p in enumerate(config.passengers) if p.board_frame <= f < p.alight_frame
        ]
        gt_counts.append(len(onboard))
        for i in onboard:
            truth.append(Detection(f, seat_boxes[config.passengers[i].seat], config.tp_score, PERSON))

        merged_with: dict[int, int] = {}
        for ev in config.merge_events:
            if (
                ev.start <= f < ev.end
                and ev.first in onboard
                and ev.second in onboard
                and ev.first not in merged_with
                and ev.second not in merged_with
            ):
                merged_with[ev.first] = ev.second
                merged_with[ev.second] = ev.first

        for i in onboard:
            p = config.passengers[i]
            # draw for every onboard passenger so merges do not shift later draws
            detected = dropout_rng.random() < p.p_detect
            dx, dy = (float(v) for v in jitter_rng.uniform(-j, j, size=2)) if j > 0 else (0.0, 0.0)
            if i in merged_with:
                partner = merged_with[i]
                if i < partner:
                    pair = (i, partner)
                    box = _union(seat_boxes[p.seat], seat_boxes[config.passengers[partner].seat])
                    noisy.append(Detection(f, box, config.tp_score, PERSON))
                    tags.append(ProvenanceTag(TagKind.MERGED_PAIR, pair))
                continue
            if not detected:
                continue
            base = seat_boxes[p.seat]
            box = base if j == 0 else BoundingBox(base.x_min + dx, base.y_min + dy, w, h)
            noisy.append(Detection(f, box, config.tp_score, PERSON))
            tags.append(ProvenanceTag(TagKind.TRUE_POSITIVE, (i,)))

        if persistent is not None:
            noisy.append(Detection(f, persistent, config.fp_score_range[1], PERSON))
            tags.append(ProvenanceTag(TagKind.PERSISTENT_FP))

        for t in by_frame.get(f, ()):
            noisy.append(Detection(f, t.box, t.score, PERSON))
            tags.append(ProvenanceTag(TagKind.TRANSIENT_FP, source=t.source))

    meta = {"video_id": config.video_id, "fps": config.fps, "frame_count": config.frame_count}
    noisy_stream = DetectionStream(detections=tuple(noisy), **meta)
    predicted = np.bincount(noisy_stream.frame_indices(), minlength=config.frame_count)
    headcounts = HeadcountSeries(
        frames=tuple(range(config.frame_count)),
        ground_truth=tuple(gt_counts),
        predicted=tuple(int(v) for v in predicted[: config.frame_count]),
    )
    logger.debug(
        "scenario %s: %d truth, %d noisy detection(s), %d transient track(s)",
        config.video_id, len(truth), len(noisy), len(transients),
    )
    return Scenario(
        ground_truth=DetectionStream(detections=tuple(truth), **meta),
        noisy=noisy_stream,
        tags=tuple(tags),
        headcounts=headcounts,
    )


def _seated(seats: list[tuple[float, float]], frame_count: int, p_detect: float = 1.0) -> tuple[Passenger, ...]:
    return tuple(Passenger(i, 0, frame_count, p_detect) for i in range(len(seats)))


def scenario_presets() -> dict[str, ScenarioConfig]:
    """Named scenarios covering the documented failure modes."""
    n = 600

    clean_seats = [(100.0, 250.0), (260.0, 250.0), (420.0, 250.0), (580.0, 250.0)]
    window_seats = [(80.0, 260.0), (220.0, 260.0), (360.0, 260.0), (500.0, 260.0), (290.0, 400.0)]
    blip_seats = [(100.0, 260.0), (320.0, 260.0), (540.0, 260.0), (210.0, 400.0)]
    merge_seats = [(150.0, 260.0), (200.0, 260.0), (420.0, 260.0), (560.0, 380.0)]
    train_seats = [
        (100.0, 260.0), (140.0, 260.0),
        (300.0, 260.0), (340.0, 260.0),
        (500.0, 260.0), (540.0, 260.0),
    ]

    return {
        "clean_bus": ScenarioConfig(
            video_id="clean_bus",
            frame_count=n,
            seats=tuple(clean_seats),
            passengers=_seated(clean_seats, n, p_detect=0.97),
            jitter_px=2.0,
        ),
        "window_fps": ScenarioConfig(
            video_id="window_fps",
            frame_count=n,
            seats=tuple(window_seats),
            passengers=_seated(window_seats, n),
            transient_fp_tracks=12,
            transient_fp_duration=(1, 3),
        ),
        "boarding_blip": ScenarioConfig(
            video_id="boarding_blip",
            frame_count=n,
            seats=tuple(blip_seats),
            passengers=(*_seated(blip_seats[:3], n), Passenger(3, 100, 112)),
        ),
        "occlusion_merge": ScenarioConfig(
            video_id="occlusion_merge",
            frame_count=n,
            seats=tuple(merge_seats),
            passengers=_seated(merge_seats, n, p_detect=0.98),
            jitter_px=2.0,
            merge_events=(MergeEvent(0, 1, 200, 320),),
            persistent_fp=PersistentFalsePositive((330.0, 400.0), (50.0, 90.0)),
        ),
        "crowded_train": ScenarioConfig(
            video_id="crowded_train",
            frame_count=n,
            seats=tuple(train_seats),
            passengers=_seated(train_seats, n, p_detect=0.98),
            jitter_px=3.0,
        ),
    }


def get_preset(name: str, seed: int | None = None) -> ScenarioConfig:
    """Look up a preset, optionally overriding its seed.

    Raises:
        InvalidConfig: If the preset does not exist.
    """
    presets = scenario_presets()
    if name not in presets:
        raise InvalidConfig(f"unknown preset {name!r}; choose from {sorted(presets)}", field="preset")
    config = presets[name]
    if seed is not None:
        config.seed = seed
    return config


_NESTED = {
    "passengers": Passenger,
    "merge_events": MergeEvent,
    "window_bands": WindowBand,
}


def _as_tuple(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_as_tuple(v) for v in value)
    return value


def scenario_from_mapping(data: Mapping[str, Any]) -> ScenarioConfig:
    """Build a ScenarioConfig from parsed TOML.

    Nested tables map to ``[[passengers]]``, ``[[merge_events]]``,
    ``[[window_bands]]`` and ``[persistent_fp]``; lists become tuples.

    Raises:
        InvalidConfig: For unknown keys, wrong shapes or violated invariants.
    """
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = set(data) - known
    if unknown:
        raise InvalidConfig(f"unknown scenario keys {sorted(unknown)}")

    kwargs: dict[str, Any] = {}
    try:
        for key, value in data.items():
            if key in _NESTED:
                kwargs[key] = tuple(_NESTED[key](**{k: _as_tuple(v) for k, v in item.items()}) for item in value)
            elif key == "persistent_fp":
                kwargs[key] = PersistentFalsePositive(**{k: _as_tuple(v) for k, v in value.items()})
            else:
                kwargs[key] = _as_tuple(value)
        config = ScenarioConfig(**kwargs)
    except (TypeError, AttributeError) as e:
        raise InvalidConfig(f"malformed scenario: {e}") from e
    config.validate()
    return config


def load_scenario(path: Path | str) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise InputOutputError(path, e.strerror or str(e)) from e
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as e:
        raise InvalidConfig(f"{path}: {e}") from e
    return scenario_from_mapping(data)


def tag_fields(tags: tuple[ProvenanceTag, ...]) -> list[dict[str, Any]]:
    """Per-detection extra fields for ingest.write_detections."""
    return [{"tag": t.to_json()} for t in tags]


def _parse_tag(raw: Any, line: int) -> ProvenanceTag:
    try:
        data = json.loads(raw) if isinstance(raw, str) else raw
        return ProvenanceTag.from_json(data)
    except json.JSONDecodeError as e:
        raise MalformedRecord(line, f"invalid tag JSON: {e.msg}") from None
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedRecord(line, f"invalid tag: {e}") from None


def read_tags(data: bytes, fmt: Format) -> list[ProvenanceTag]:
    """Recover provenance tags from a noisy stream written with tag fields.

    Raises:
        MalformedRecord: If a record is unparseable or lacks a valid tag.
    """
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as e:
        raise MalformedRecord(None, f"input is not UTF-8: {e}") from None
    tags = []
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
                continue
            if "tag" not in rec:
                raise MalformedRecord(line_no, "record carries no tag")
            tags.append(_parse_tag(rec["tag"], line_no))
    else:
        reader = csv.DictReader(io.StringIO(text, newline=""))
        for rec in reader:
            if rec.get("frame") in (None, ""):
                continue
            if not rec.get("tag"):
                raise MalformedRecord(reader.line_num, "record carries no tag")
            tags.append(_parse_tag(rec["tag"], reader.line_num))
    return tags
