"""Pytest configuration and fixtures."""

import numpy as np
import pytest

from src.ingest import BoundingBox, Detection, DetectionStream


def box_at(cx: float, cy: float, w: float = 20.0, h: float = 40.0) -> BoundingBox:
    """Box of size w x h centred on (cx, cy)."""
    return BoundingBox(cx - w / 2, cy - h / 2, w, h)


def stream_from(
    frames: list[list[tuple[float, float]]],
    video_id: str = "T01",
    frame_count: int | None = None,
    score: float = 0.9,
    label: str = "person",
) -> DetectionStream:
    """Stream with one detection per centroid, frame by frame."""
    detections = tuple(
        Detection(f, box_at(cx, cy), score, label)
        for f, centroids in enumerate(frames)
        for cx, cy in centroids
    )
    return DetectionStream(
        video_id=video_id,
        frame_count=len(frames) if frame_count is None else frame_count,
        detections=detections,
    )


def random_stream(rng: np.random.Generator, max_frames: int = 40, max_per_frame: int = 6) -> DetectionStream:
    """Random valid stream with arbitrary floats, labels and gaps."""
    frame_count = int(rng.integers(1, max_frames + 1))
    detections = []
    for f in range(frame_count):
        for _ in range(int(rng.integers(0, max_per_frame + 1))):
            detections.append(Detection(
                frame_index=f,
                box=BoundingBox(
                    float(rng.uniform(0, 600)),
                    float(rng.uniform(0, 400)),
                    float(rng.uniform(0.5, 80)),
                    float(rng.uniform(0.5, 120)),
                ),
                score=float(rng.random()),
                label=str(rng.choice(["person", "chair", "bag, \"large\""])),
            ))
    return DetectionStream(
        video_id=f"V{int(rng.integers(100)):02d}",
        fps=float(rng.choice([4.0, 2.5, 25.0])),
        frame_count=frame_count + int(rng.integers(0, 3)),
        detections=tuple(detections),
    )


@pytest.fixture
def seed():
    """Fixed seed for reproducibility."""
    return 42


@pytest.fixture
def rng(seed):
    """Seeded random number generator."""
    return np.random.default_rng(seed)
