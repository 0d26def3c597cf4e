"""Bounding-box persistence filter.

Seated passengers keep producing boxes in the same region of the image for
minutes; pedestrians glimpsed through a window or shadows mistaken for a
person last a few frames.  Detections are associated into tracks by
centroid proximity and tracks seen fewer than K times are dropped.

The filter is offline: the first pass builds and confirms tracks over the
whole stream, the second keeps detections of confirmed tracks.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np

from src.config import FilterConfig
from src.errors import EmptySeries
from src.ingest import DetectionStream, HeadcountSeries, join_predictions
from src.metrics import headcount_array, mean_abs_rc, relative_change_series

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Track:
    """Detections of one putative passenger (or false-positive source).

    Attributes:
        track_id: Creation-order identifier.
        observations: (frame_index, index into stream.detections), one per frame.
        last_centroid: Centroid of the last observation.
    """

    track_id: int
    observations: tuple[tuple[int, int], ...]
    last_centroid: tuple[float, float]

    @property
    def appearance_count(self) -> int:
        return len(self.observations)

    @property
    def first_frame(self) -> int:
        return self.observations[0][0]

    @property
    def last_frame(self) -> int:
        return self.observations[-1][0]


@dataclass(frozen=True)
class TrackSummary:
    track_id: int
    first_frame: int
    last_frame: int
    appearance_count: int


@dataclass(frozen=True)
class FilterReport:
    """Outcome of confirming tracks against the persistence threshold."""

    confirmed_track_ids: tuple[int, ...]
    suppressed_track_ids: tuple[int, ...]
    removed_detection_count: int
    tracks: tuple[TrackSummary, ...]

    @property
    def appearance_counts(self) -> dict[int, int]:
        return {t.track_id: t.appearance_count for t in self.tracks}


@dataclass(frozen=True)
class SweepPoint:
    """Filter outcome for one (tolerance, K) combination."""

    tolerance_px: float
    min_persistence_frames: int
    track_count: int
    confirmed: int
    suppressed: int
    removed_detections: int
    mean_abs_rc_pct: float | None


class _OpenTrack:
    __slots__ = ("track_id", "observations", "cx", "cy")

    def __init__(self, track_id: int, frame: int, index: int, cx: float, cy: float):
        self.track_id = track_id
        self.observations = [(frame, index)]
        self.cx = cx
        self.cy = cy

    @property
    def last_frame(self) -> int:
        return self.observations[-1][0]

    def freeze(self) -> Track:
        return Track(self.track_id, tuple(self.observations), (self.cx, self.cy))


def build_tracks(stream: DetectionStream, config: FilterConfig) -> list[Track]:
    """Associate detections into tracks, sweeping frames in ascending order.

    A detection is a candidate for an open track (seen within ``gap_frames``)
    when both centroid axes lie within ``tolerance_px`` of the track's last
    centroid.  Candidates are matched greedily by ascending Euclidean
    distance, ties going to the lower track id and then the earlier
    detection.  Unmatched detections open new tracks.
    """
    tau = config.tolerance_px
    gap = config.gap_frames
    centroids = stream.centroids()
    frames = stream.frame_indices()

    active: list[_OpenTrack] = []
    closed: list[_OpenTrack] = []
    next_id = 0

    boundaries = np.flatnonzero(np.diff(frames)) + 1
    starts = np.concatenate(([0], boundaries)) if len(frames) else np.empty(0, dtype=np.int64)
    ends = np.concatenate((boundaries, [len(frames)])) if len(frames) else np.empty(0, dtype=np.int64)

    for start, end in zip(starts.tolist(), ends.tolist()):
        frame = int(frames[start])

        still_open = []
        for track in active:
            (still_open if frame - track.last_frame <= gap else closed).append(track)
        active = still_open

        det_xy = centroids[start:end]
        matched = np.zeros(end - start, dtype=bool)

        if active:
            track_xy = np.array([(t.cx, t.cy) for t in active])
            delta = np.abs(track_xy[:, None, :] - det_xy[None, :, :])
            ti, di = np.nonzero((delta <= tau).all(axis=2))
            if len(ti):
                dist = np.hypot(delta[ti, di, 0], delta[ti, di, 1])
                # active is kept in creation order, so position doubles as track-id rank
                order = np.lexsort((di, ti, dist))
                track_used = np.zeros(len(active), dtype=bool)
                for k in order.tolist():
                    t, d = int(ti[k]), int(di[k])
                    if track_used[t] or matched[d]:
                        continue
                    track_used[t] = True
                    matched[d] = True
                    track = active[t]
                    track.observations.append((frame, start + d))
                    track.cx, track.cy = float(det_xy[d, 0]), float(det_xy[d, 1])

        for d in np.flatnonzero(~matched).tolist():
            active.append(_OpenTrack(next_id, frame, start + d, float(det_xy[d, 0]), float(det_xy[d, 1])))
            next_id += 1

    tracks = sorted((t.freeze() for t in closed + active), key=lambda t: t.track_id)
    logger.debug("built %d track(s) from %d detection(s)", len(tracks), len(stream))
    return tracks


def confirm_tracks(tracks: Sequence[Track], config: FilterConfig) -> FilterReport:
    """Confirm tracks with at least ``min_persistence_frames`` appearances."""
    k = config.min_persistence_frames
    confirmed = tuple(t.track_id for t in tracks if t.appearance_count >= k)
    suppressed = tuple(t.track_id for t in tracks if t.appearance_count < k)
    removed = sum(t.appearance_count for t in tracks if t.appearance_count < k)
    summaries = tuple(
        TrackSummary(t.track_id, t.first_frame, t.last_frame, t.appearance_count) for t in tracks
    )
    return FilterReport(confirmed, suppressed, removed, summaries)


def _kept_mask(tracks: Sequence[Track], size: int, min_frames: int) -> np.ndarray:
    keep = np.zeros(size, dtype=bool)
    for track in tracks:
        if track.appearance_count >= min_frames:
            keep[[i for _, i in track.observations]] = True
    return keep


def apply_filter(
    stream: DetectionStream, config: FilterConfig
) -> tuple[DetectionStream, FilterReport]:
    """Drop detections of tracks that do not persist for K frames.

    Output keeps the input order, frame_count and fps.
    """
    config.validate()
    tracks = build_tracks(stream, config)
    report = confirm_tracks(tracks, config)
    keep = _kept_mask(tracks, len(stream), config.min_persistence_frames)
    filtered = replace(
        stream, detections=tuple(d for d, k in zip(stream.detections, keep.tolist()) if k)
    )
    logger.info(
        "%s: %d of %d track(s) suppressed, %d detection(s) removed",
        stream.video_id, len(report.suppressed_track_ids), len(tracks),
        report.removed_detection_count,
    )
    return filtered, report


def report_to_json(report: FilterReport, video_id: str | None = None) -> dict:
    out: dict = {}
    if video_id is not None:
        out["video_id"] = video_id
    out.update({
        "confirmed": list(report.confirmed_track_ids),
        "suppressed": list(report.suppressed_track_ids),
        "removed_detections": report.removed_detection_count,
        "tracks": [
            {"id": t.track_id, "first": t.first_frame, "last": t.last_frame, "count": t.appearance_count}
            for t in report.tracks
        ],
    })
    return out


def sweep(
    stream: DetectionStream,
    ground_truth: HeadcountSeries | None,
    tolerances: Sequence[float] = (10.0, 15.0),
    min_frames: Sequence[int] = (4, 10, 20, 40, 80, 160, 300),
    gap_frames: int = 8,
) -> list[SweepPoint]:
    """Run the filter over a grid of tolerances and persistence windows.

    Tracks are built once per tolerance; every K reuses them.  When ground
    truth is given, each point carries the after-filter mean absolute
    relative change over the ground-truth frames.
    """
    frames = stream.frame_indices()
    points = []
    for tau in tolerances:
        base = FilterConfig(tau, min(min_frames), gap_frames, allow_out_of_range=True)
        base.validate()
        tracks = build_tracks(stream, base)
        for k in min_frames:
            config = FilterConfig(tau, k, gap_frames, allow_out_of_range=True)
            config.validate()
            report = confirm_tracks(tracks, config)
            score = None
            if ground_truth is not None:
                keep = _kept_mask(tracks, len(stream), k)
                counts = headcount_array(frames[keep], stream.frame_count)
                try:
                    score = mean_abs_rc(relative_change_series(join_predictions(ground_truth, counts)))
                except EmptySeries:
                    score = None
            points.append(SweepPoint(
                tolerance_px=tau,
                min_persistence_frames=k,
                track_count=len(tracks),
                confirmed=len(report.confirmed_track_ids),
                suppressed=len(report.suppressed_track_ids),
                removed_detections=report.removed_detection_count,
                mean_abs_rc_pct=score,
            ))
    return points
