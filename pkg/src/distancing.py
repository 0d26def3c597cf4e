"""Per-frame social-distancing assessment.

Each detection is reduced to its box centroid.  A passenger's risk tier
follows from the distance to the nearest other passenger in the same
frame; DBSCAN cluster labels are reported alongside as grouping context.
All distances are raw image pixels.
"""

import enum
import logging
from collections import deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from src.config import DistancingConfig
from src.errors import InvalidConfig, InvariantViolation
from src.ingest import BoundingBox, Detection, DetectionStream

logger = logging.getLogger(__name__)

NOISE = -1


class RiskTier(enum.IntEnum):
    SAFE = 0
    WARNING = 1
    DANGER = 2

    @property
    def colour(self) -> str:
        return _TIER_COLOURS[self]


_TIER_COLOURS = {
    RiskTier.SAFE: "green",
    RiskTier.WARNING: "amber",
    RiskTier.DANGER: "red",
}


@dataclass(frozen=True)
class FrameAssessment:
    """Distancing outcome for one frame, indexed like the frame's detections.

    Attributes:
        cluster_labels: DBSCAN cluster id per detection, NOISE (-1) for noise.
        nearest_neighbor_distance: Distance to the closest other centroid,
            None when the detection is alone in the frame.
    """

    frame_index: int
    centroids: tuple[tuple[float, float], ...]
    cluster_labels: tuple[int, ...]
    nearest_neighbor_distance: tuple[float | None, ...]
    tiers: tuple[RiskTier, ...]


@dataclass(frozen=True)
class DistancingSummary:
    frames_total: int
    frames_assessed: int
    frames_empty: int
    tier_counts: dict[str, int]
    frames_with_danger: int
    max_clusters: int
    mean_clusters: float


def centroid(box: BoundingBox) -> tuple[float, float]:
    return box.centroid()


def pairwise_distances(points: Sequence[Sequence[float]] | np.ndarray) -> np.ndarray:
    """Symmetric (n, n) matrix of Euclidean distances."""
    xy = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return cdist(xy, xy)


def _check_dbscan(eps: float, min_pts: int) -> None:
    if not eps > 0:
        raise InvalidConfig(f"eps must be positive, got {eps}", field="eps")
    if min_pts < 1:
        raise InvalidConfig(f"min_pts must be at least 1, got {min_pts}", field="min_pts")


def _expand_clusters(neighbours: Sequence[Sequence[int]], min_pts: int) -> np.ndarray:
    n = len(neighbours)
    core = [len(nb) >= min_pts for nb in neighbours]
    labels = np.full(n, NOISE, dtype=np.int64)
    cluster = 0
    for seed in range(n):
        if labels[seed] != NOISE or not core[seed]:
            continue
        labels[seed] = cluster
        queue = deque([seed])
        while queue:
            p = queue.popleft()
            for q in sorted(neighbours[p]):
                if labels[q] == NOISE:
                    labels[q] = cluster
                    if core[q]:
                        queue.append(q)
        cluster += 1

    # renumber so ids ascend with each cluster's lowest member index
    if cluster:
        first_member = {}
        for i, label in enumerate(labels.tolist()):
            if label != NOISE and label not in first_member:
                first_member[label] = len(first_member)
        labels = np.array([first_member.get(v, NOISE) for v in labels.tolist()], dtype=np.int64)
    return labels


def dbscan(points: Sequence[Sequence[float]] | np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Density-based clustering with deterministic border assignment.

    A point is core when at least ``min_pts`` points, itself included, lie
    within ``eps``.  Clusters grow from core points in ascending index
    order; a border point joins the first cluster that reaches it.

    Returns:
        Label per point: cluster id (ascending with lowest member index) or NOISE.

    Raises:
        InvalidConfig: If eps <= 0 or min_pts < 1.
    """
    _check_dbscan(eps, min_pts)
    xy = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if not len(xy):
        return np.empty(0, dtype=np.int64)
    tree = cKDTree(xy)
    neighbours = tree.query_ball_point(xy, r=eps)
    return _expand_clusters(neighbours, min_pts)


def _tier(distance: float | None, config: DistancingConfig) -> RiskTier:
    if distance is None or distance >= config.warn_distance:
        return RiskTier.SAFE
    if distance < config.danger_distance:
        return RiskTier.DANGER
    return RiskTier.WARNING


def classify_risk(detections: Sequence[Detection], config: DistancingConfig) -> FrameAssessment:
    """Assess the detections of one frame.

    Raises:
        InvariantViolation: If detections is empty or spans several frames.
        InvalidConfig: If the config is invalid.
    """
    config.validate()
    if not detections:
        raise InvariantViolation(None, "cannot assess a frame without detections")
    frame = detections[0].frame_index
    if any(d.frame_index != frame for d in detections):
        raise InvariantViolation(None, "detections of one assessment must share a frame")

    xy = np.array([d.box.centroid() for d in detections], dtype=np.float64)
    labels = dbscan(xy, config.effective_eps, config.min_pts)
    dist = pairwise_distances(xy)

    if len(xy) > 1:
        np.fill_diagonal(dist, np.inf)
        nearest: list[float | None] = dist.min(axis=1).tolist()
    else:
        nearest = [None]

    return FrameAssessment(
        frame_index=frame,
        centroids=tuple((float(x), float(y)) for x, y in xy),
        cluster_labels=tuple(labels.tolist()),
        nearest_neighbor_distance=tuple(nearest),
        tiers=tuple(_tier(d, config) for d in nearest),
    )


def assess_stream(stream: DetectionStream, config: DistancingConfig) -> list[FrameAssessment]:
    """One assessment per frame holding at least one detection, in frame order."""
    config.validate()
    return [classify_risk(dets, config) for _, dets in stream.frames()]


def summarize(assessments: Iterable[FrameAssessment], frame_count: int) -> DistancingSummary:
    tier_counts = {tier.name.lower(): 0 for tier in RiskTier}
    assessed = 0
    danger_frames = 0
    cluster_counts = []
    for a in assessments:
        assessed += 1
        for tier in a.tiers:
            tier_counts[tier.name.lower()] += 1
        if RiskTier.DANGER in a.tiers:
            danger_frames += 1
        cluster_counts.append(len({c for c in a.cluster_labels if c != NOISE}))
    return DistancingSummary(
        frames_total=frame_count,
        frames_assessed=assessed,
        frames_empty=frame_count - assessed,
        tier_counts=tier_counts,
        frames_with_danger=danger_frames,
        max_clusters=max(cluster_counts, default=0),
        mean_clusters=float(np.mean(cluster_counts)) if cluster_counts else 0.0,
    )


def assessment_to_json(assessment: FrameAssessment) -> dict:
    return {
        "frame": assessment.frame_index,
        "detections": [
            {
                "index": i,
                "centroid": [x, y],
                "cluster": None if label == NOISE else label,
                "nn_distance": nn,
                "tier": tier.name.lower(),
            }
            for i, ((x, y), label, nn, tier) in enumerate(zip(
                assessment.centroids,
                assessment.cluster_labels,
                assessment.nearest_neighbor_distance,
                assessment.tiers,
            ))
        ],
    }


def summary_to_json(summary: DistancingSummary) -> dict:
    return {
        "frames_total": summary.frames_total,
        "frames_assessed": summary.frames_assessed,
        "frames_empty": summary.frames_empty,
        "tiers": dict(summary.tier_counts),
        "frames_with_danger": summary.frames_with_danger,
        "max_clusters": summary.max_clusters,
        "mean_clusters": summary.mean_clusters,
    }
