"""Tests for relative-change evaluation."""

import numpy as np
import pytest

from src.errors import EmptySeries, FrameDomainMismatch, NegativeCount
from src.ingest import DetectionStream, HeadcountSeries
from src.metrics import (
    RelativeChangeSeries,
    compare_filtered,
    comparison_to_json,
    constant_segments,
    evaluate,
    headcount,
    longest_constant_segment,
    mean_abs_rc,
    plot_relative_change,
    relative_change,
    relative_change_series,
    summary_to_csv,
    summary_to_json,
)
from tests.conftest import stream_from

# (ground truth, prediction) per recorded journey V01..V10
JOURNEYS = [(13, 7), (7, 3), (4, 3), (8, 5), (8, 4), (3, 2), (3, 3), (3, 2), (4, 3), (5, 4)]


def series(gt, pred, start: int = 0) -> HeadcountSeries:
    return HeadcountSeries(tuple(range(start, start + len(gt))), tuple(gt), tuple(pred))


class TestRelativeChange:
    @pytest.mark.parametrize("y, x", JOURNEYS)
    def test_journey_arithmetic(self, y, x):
        assert relative_change(y, x) == pytest.approx((y - x) / y, abs=1e-9)

    def test_under_prediction_is_positive(self):
        assert relative_change(13, 7) == pytest.approx(6 / 13, abs=1e-9)
        assert relative_change(13, 7) > 0
        assert relative_change(3, 5) < 0

    def test_exact_prediction_is_zero(self):
        assert relative_change(3, 3) == 0.0

    def test_zero_ground_truth(self):
        assert relative_change(0, 3) is None
        assert relative_change(0, 0) == 0.0

    def test_total_miss_is_one(self, rng):
        for y in rng.integers(1, 10_000, size=500):
            assert relative_change(int(y), 0) == 1.0

    def test_scale_invariant(self, rng):
        for _ in range(1000):
            y = int(rng.integers(1, 200))
            x = int(rng.integers(0, 400))
            k = int(rng.integers(1, 50))
            assert relative_change(k * y, k * x) == pytest.approx(relative_change(y, x), abs=1e-12)

    def test_negative_rejected(self):
        with pytest.raises(NegativeCount):
            relative_change(-1, 0)

    def test_series_requires_predictions(self):
        with pytest.raises(FrameDomainMismatch):
            relative_change_series(HeadcountSeries((0,), (1,), (None,)))

    def test_series_range(self):
        rc = relative_change_series(series([4, 4, 2], [4, 2, 2]), frames=(1, 2))
        assert rc.frames == (1, 2)
        assert rc.values == (0.5, 0.0)

    def test_empty_range(self):
        with pytest.raises(FrameDomainMismatch):
            relative_change_series(series([1], [1]), frames=(5, 9))


class TestMeanAbsRc:
    @pytest.mark.parametrize("y, x", JOURNEYS)
    def test_constant_series(self, y, x):
        rc = relative_change_series(series([y] * 50, [x] * 50))
        assert mean_abs_rc(rc) == pytest.approx(abs(y - x) / y * 100, abs=0.01)

    def test_first_journey_percentage(self):
        assert mean_abs_rc(relative_change_series(series([13] * 7, [7] * 7))) == pytest.approx(46.15, abs=0.01)

    def test_exact_is_zero(self):
        assert mean_abs_rc(relative_change_series(series([5, 3, 1], [5, 3, 1]))) == 0.0

    def test_absolute_value_symmetry(self):
        assert mean_abs_rc(RelativeChangeSeries((0, 1), (0.5, -0.5))) == pytest.approx(50.0)

    def test_undefined_frames_excluded(self):
        rc = relative_change_series(series([0, 2], [1, 1]))
        assert rc.excluded_count == 1
        assert rc.evaluated_count == 1
        assert mean_abs_rc(rc) == pytest.approx(50.0)

    def test_all_undefined(self):
        with pytest.raises(EmptySeries):
            mean_abs_rc(relative_change_series(series([0, 0], [1, 2])))

    def test_concatenation_bound(self, rng):
        for _ in range(100):
            gt_a = rng.integers(1, 15, size=int(rng.integers(1, 30)))
            gt_b = rng.integers(1, 15, size=int(rng.integers(1, 30)))
            a = relative_change_series(series(gt_a.tolist(), rng.integers(0, 15, size=len(gt_a)).tolist()))
            b = relative_change_series(series(gt_b.tolist(), rng.integers(0, 15, size=len(gt_b)).tolist()))
            joined = RelativeChangeSeries(a.frames + b.frames, a.values + b.values)
            low, high = sorted((mean_abs_rc(a), mean_abs_rc(b)))
            assert low - 1e-9 <= mean_abs_rc(joined) <= high + 1e-9


class TestHeadcount:
    def test_empty_stream(self):
        assert headcount(DetectionStream("V", frame_count=5)).tolist() == [0] * 5

    def test_counts(self):
        stream = stream_from([[(50, 50), (150, 50), (250, 50)], [], [(50, 50)]])
        assert headcount(stream).tolist() == [3, 0, 1]


class TestSegments:
    def test_constant_segments(self):
        segs = constant_segments(series([3, 3, 3, 4, 4], [3, 2, 3, 4, 1]))
        assert [(s.start, s.end, s.ground_truth, s.modal_prediction) for s in segs] == [
            (0, 2, 3, 3), (3, 4, 4, 1)
        ]

    def test_gap_splits_segment(self):
        gt = HeadcountSeries((0, 1, 5), (2, 2, 2), (2, 2, 2))
        assert [(s.start, s.end) for s in constant_segments(gt)] == [(0, 1), (5, 5)]

    def test_longest_segment(self):
        assert longest_constant_segment(series([1, 2, 2, 2, 1, 1], [0] * 6)) == (1, 3)

    def test_longest_segment_empty(self):
        with pytest.raises(EmptySeries):
            longest_constant_segment(HeadcountSeries())


class TestEvaluate:
    def test_summary(self):
        summary = evaluate("V01", series([13, 13, 0], [7, 7, 0]))
        assert summary.mean_abs_rc_pct == pytest.approx(6 / 13 * 100 * 2 / 3)
        assert summary.frames_evaluated == 3
        assert summary.frames_excluded == 0
        assert summary.per_frame[0].rc == pytest.approx(6 / 13)

    def test_summary_json_and_csv(self):
        summary = evaluate("V01", series([2, 0], [1, 1]))
        out = summary_to_json(summary)
        assert out["per_frame"][1]["rc"] is None
        assert out["frames_excluded"] == 1
        rows = summary_to_csv([("before", summary)]).decode().splitlines()
        assert rows[0] == "series,video_id,frame,gt,pred,rc_pct"
        assert rows[1] == "before,V01,0,2,1,50.0"
        assert rows[2] == "before,V01,1,0,1,"


class TestCompareFiltered:
    def test_identical_streams(self):
        stream = stream_from([[(50, 50)], [(50, 50), (200, 50)]])
        result = compare_filtered(series([1, 1], [None, None]), stream, stream)
        assert result.delta_pct == 0.0
        assert result.correct_frames_broken == ()

    def test_removing_false_positive_helps(self):
        before = stream_from([[(50, 50), (300, 50)], [(50, 50)]])
        after = stream_from([[(50, 50)], [(50, 50)]])
        result = compare_filtered(series([1, 1], [None, None]), before, after)
        assert result.before.mean_abs_rc_pct == pytest.approx(50.0)
        assert result.after.mean_abs_rc_pct == 0.0
        assert result.delta_pct == pytest.approx(-50.0)
        assert result.true_positive_removed_frames == ()

    def test_removing_true_positive_is_reported(self):
        before = stream_from([[(50, 50), (300, 50)], [(50, 50), (300, 50)]])
        after = stream_from([[(50, 50)], [(50, 50), (300, 50)]])
        result = compare_filtered(series([2, 2], [None, None]), before, after)
        assert result.true_positive_removed_frames == (0,)
        assert result.correct_frames_broken == (0,)
        assert comparison_to_json(result)["correct_frames_broken"] == [0]

    def test_frame_count_mismatch(self):
        with pytest.raises(FrameDomainMismatch):
            compare_filtered(series([1], [None]), stream_from([[(50, 50)]]), stream_from([[(50, 50)], []]))


class TestPlot:
    def test_svg_bytes(self):
        rc = RelativeChangeSeries((0, 1, 2), (0.5, None, -0.25))
        svg = plot_relative_change({"before": rc, "after": rc}, title="V01")
        assert svg.lstrip().startswith(b"<?xml")
        assert b"<svg" in svg

    def test_deterministic(self):
        rc = RelativeChangeSeries(tuple(range(10)), tuple(np.linspace(-1, 1, 10).tolist()))
        assert plot_relative_change({"x": rc}) == plot_relative_change({"x": rc})
