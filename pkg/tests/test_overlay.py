"""Tests for SVG overlays."""

import pytest

from src.config import DistancingConfig
from src.distancing import RiskTier, classify_risk
from src.errors import InvariantViolation
from src.execution import run_all
from src.ingest import Detection
from src.overlay import TIER_STROKES, overlay_name, render_frame_svg
from tests.conftest import box_at


def detections(centroids):
    return [Detection(3, box_at(x, y), 0.9, "person") for x, y in centroids]


class TestRenderFrameSvg:
    def test_lone_passenger_is_green(self):
        dets = detections([(100, 100)])
        svg = render_frame_svg(classify_risk(dets, DistancingConfig()), dets)
        assert svg.lstrip().startswith(b"<?xml")
        assert TIER_STROKES[RiskTier.SAFE].encode() in svg
        assert TIER_STROKES[RiskTier.DANGER].encode() not in svg
        assert TIER_STROKES[RiskTier.WARNING].encode() not in svg

    def test_close_pair_is_red(self):
        dets = detections([(100, 100), (130, 100)])
        svg = render_frame_svg(classify_risk(dets, DistancingConfig()), dets)
        assert TIER_STROKES[RiskTier.DANGER].encode() in svg

    def test_deterministic(self):
        dets = detections([(100, 100), (200, 100), (500, 300)])
        assessment = classify_risk(dets, DistancingConfig())
        assert render_frame_svg(assessment, dets) == render_frame_svg(assessment, dets)

    def test_deterministic_across_worker_threads(self):
        dets = detections([(100, 100), (130, 100), (500, 300)])
        assessment = classify_risk(dets, DistancingConfig())
        renders = run_all(range(400), lambda _: render_frame_svg(assessment, dets), 8)
        assert set(renders) == {render_frame_svg(assessment, dets)}

    def test_length_mismatch(self):
        dets = detections([(100, 100), (200, 100)])
        with pytest.raises(InvariantViolation):
            render_frame_svg(classify_risk(dets, DistancingConfig()), dets[:1])


def test_overlay_name():
    assert overlay_name("V01", 42) == "V01_000042.svg"
