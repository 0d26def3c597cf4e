"""Tests for the synthetic scenario generator."""

from collections import Counter

import numpy as np
import pytest

from src.config import DistancingConfig, FilterConfig
from src.errors import InputOutputError, InvalidConfig, MalformedRecord
from src.ingest import write_detections
from src.synth import (
    Passenger,
    ProvenanceTag,
    ScenarioConfig,
    TagKind,
    generate,
    get_preset,
    load_scenario,
    read_tags,
    scenario_from_mapping,
    scenario_presets,
    tag_fields,
)

SCENARIO_TOML = """\
seed = 3
video_id = "toml"
frame_count = 50
seats = [[100.0, 260.0], [300.0, 260.0]]
jitter_px = 1.5

[[passengers]]
seat = 0
board_frame = 0
alight_frame = 50

[[passengers]]
seat = 1
board_frame = 10
alight_frame = 20
p_detect = 0.5

[persistent_fp]
center = [500.0, 400.0]
size = [40.0, 80.0]
"""


def serialized(scenario) -> bytes:
    return (
        write_detections(scenario.ground_truth, "ndjson")
        + write_detections(scenario.noisy, "ndjson", tag_fields(scenario.tags))
    )


class TestGenerate:
    def test_empty_scenario(self):
        scenario = generate(ScenarioConfig(frame_count=10))
        assert scenario.ground_truth.detections == ()
        assert scenario.noisy.detections == ()
        assert scenario.headcounts.ground_truth == (0,) * 10
        assert scenario.headcounts.predicted == (0,) * 10

    def test_noiseless_identity(self):
        config = ScenarioConfig(seats=((100.0, 260.0),), passengers=(Passenger(0, 0, 600),))
        scenario = generate(config)
        assert scenario.noisy == scenario.ground_truth
        assert len(scenario.noisy) == 600
        assert all(t.is_true_positive for t in scenario.tags)

    def test_same_seed_same_bytes(self):
        for name in scenario_presets():
            assert serialized(generate(get_preset(name, seed=7))) == serialized(generate(get_preset(name, seed=7)))

    def test_different_seed_differs(self):
        assert serialized(generate(get_preset("clean_bus", seed=1))) != serialized(generate(get_preset("clean_bus", seed=2)))

    def test_tags_align_with_noisy_detections(self):
        scenario = generate(get_preset("occlusion_merge", seed=2))
        assert len(scenario.tags) == len(scenario.noisy)

    def test_false_positives_do_not_shift_dropout(self):
        base = dict(
            seed=5,
            frame_count=200,
            seats=((100.0, 260.0), (300.0, 260.0)),
            passengers=(Passenger(0, 0, 200, 0.7), Passenger(1, 0, 200, 0.7)),
        )
        plain = generate(ScenarioConfig(**base))
        noisy = generate(ScenarioConfig(**base, transient_fp_tracks=8))

        def true_positives(s):
            return [d for d, t in zip(s.noisy.detections, s.tags) if t.is_true_positive]

        assert true_positives(plain) == true_positives(noisy)

    def test_jitter_stays_within_amplitude(self):
        config = ScenarioConfig(seats=((100.0, 260.0),), passengers=(Passenger(0, 0, 300),), jitter_px=4.0)
        scenario = generate(config)
        offsets = scenario.noisy.centroids() - np.array([100.0, 260.0])
        assert np.abs(offsets).max() <= 4.0

    def test_headcounts_match_streams(self):
        scenario = generate(get_preset("window_fps", seed=3))
        gt = np.bincount(scenario.ground_truth.frame_indices(), minlength=600)
        pred = np.bincount(scenario.noisy.frame_indices(), minlength=600)
        assert scenario.headcounts.ground_truth == tuple(gt.tolist())
        assert scenario.headcounts.predicted == tuple(pred.tolist())


class TestPresets:
    def test_catalogue(self):
        assert set(scenario_presets()) == {
            "clean_bus", "window_fps", "boarding_blip", "occlusion_merge", "crowded_train"
        }
        for config in scenario_presets().values():
            config.validate()

    def test_unknown_preset(self):
        with pytest.raises(InvalidConfig) as err:
            get_preset("tram")
        assert err.value.field == "preset"

    def test_window_fps_transients_are_short(self):
        scenario = generate(get_preset("window_fps", seed=21))
        fp_tags = [t for t in scenario.tags if not t.is_true_positive]
        assert fp_tags
        assert all(t.kind is TagKind.TRANSIENT_FP for t in fp_tags)
        durations = Counter(t.source for t in fp_tags)
        assert len(durations) >= 10
        assert max(durations.values()) <= 3

    def test_boarding_blip_has_one_short_passenger(self):
        config = get_preset("boarding_blip")
        k = FilterConfig().min_persistence_frames
        short = [p for p in config.passengers if p.alight_frame - p.board_frame < k]
        assert len(short) == 1

    def test_crowded_train_pairs_are_dangerous(self):
        config = get_preset("crowded_train")
        danger = DistancingConfig().danger_distance
        seats = np.array(config.seats)
        for a, b in ((0, 1), (2, 3), (4, 5)):
            gap = np.hypot(*(seats[a] - seats[b]))
            assert gap + 2 * np.sqrt(2) * config.jitter_px < danger

    def test_occlusion_merge(self):
        scenario = generate(get_preset("occlusion_merge", seed=8))
        kinds = Counter(t.kind for t in scenario.tags)
        assert kinds[TagKind.MERGED_PAIR] == 120
        assert kinds[TagKind.PERSISTENT_FP] == 600
        merged = [t for t in scenario.tags if t.kind is TagKind.MERGED_PAIR]
        assert all(t.passengers == (0, 1) for t in merged)

    def test_preset_seed_override(self):
        assert get_preset("clean_bus", seed=99).seed == 99


class TestValidation:
    @pytest.mark.parametrize("change, field", [
        ({"passengers": (Passenger(0, 30, 10),)}, "passengers"),
        ({"passengers": (Passenger(3, 0, 10),)}, "passengers"),
        ({"passengers": (Passenger(0, 0, 10, p_detect=1.5),)}, "passengers"),
        ({"seats": ((5.0, 5.0),)}, "seats"),
        ({"jitter_px": -1.0}, "jitter_px"),
        ({"transient_fp_duration": (3, 1)}, "transient_fp_duration"),
        ({"fp_score_range": (0.9, 0.2)}, "fp_score_range"),
        ({"seed": -1}, "seed"),
    ])
    def test_rejected(self, change, field):
        base = {"frame_count": 50, "seats": ((100.0, 260.0),)}
        with pytest.raises(InvalidConfig) as err:
            ScenarioConfig(**{**base, **change}).validate()
        assert err.value.field == field

    def test_transients_need_window_band(self):
        with pytest.raises(InvalidConfig):
            ScenarioConfig(transient_fp_tracks=2, window_bands=()).validate()


class TestScenarioFiles:
    def test_load_toml(self, tmp_path):
        path = tmp_path / "scenario.toml"
        path.write_text(SCENARIO_TOML)
        config = load_scenario(path)
        assert config.video_id == "toml"
        assert config.seats == ((100.0, 260.0), (300.0, 260.0))
        assert config.passengers[1] == Passenger(1, 10, 20, 0.5)
        assert config.persistent_fp.center == (500.0, 400.0)
        assert generate(config).headcounts.ground_truth[15] == 2

    def test_unknown_key(self):
        with pytest.raises(InvalidConfig):
            scenario_from_mapping({"sedas": []})

    def test_bad_passenger_table(self):
        with pytest.raises(InvalidConfig):
            scenario_from_mapping({"seats": [[100.0, 260.0]], "passengers": [{"seat": 0, "door": 2}]})

    def test_board_after_alight(self):
        with pytest.raises(InvalidConfig):
            scenario_from_mapping({
                "seats": [[100.0, 260.0]],
                "passengers": [{"seat": 0, "board_frame": 40, "alight_frame": 20}],
            })

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputOutputError):
            load_scenario(tmp_path / "absent.toml")

    def test_invalid_toml(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("seed = [")
        with pytest.raises(InvalidConfig):
            load_scenario(path)


class TestTags:
    @pytest.mark.parametrize("fmt", ["ndjson", "csv"])
    def test_tags_survive_serialization(self, fmt):
        scenario = generate(get_preset("occlusion_merge", seed=1))
        data = write_detections(scenario.noisy, fmt, tag_fields(scenario.tags))
        assert tuple(read_tags(data, fmt)) == scenario.tags

    def test_missing_tag(self):
        data = b'{"video_id": "V", "frame": 0, "x": 1, "y": 1, "w": 1, "h": 1, "score": 0.5, "label": "person"}\n'
        with pytest.raises(MalformedRecord):
            read_tags(data, "ndjson")

    @pytest.mark.parametrize(
        "line",
        [
            b"{not json\n",
            b'{"video_id": "V", "frame": 0, "tag": {"kind": "ghost"}}\n',
            b'{"video_id": "V", "frame": 0, "tag": {"passengers": [1]}}\n',
            b'{"video_id": "V", "frame": 0, "tag": 7}\n',
        ],
    )
    def test_unreadable_tag_names_the_line(self, line):
        with pytest.raises(MalformedRecord) as err:
            read_tags(b'{"video_id": "V", "frame_count": 3}\n' + line, "ndjson")
        assert err.value.line == 2

    def test_unreadable_csv_tag(self):
        data = b"video_id,frame,x,y,w,h,score,label,tag\r\nV,0,1,1,1,1,0.5,person,{oops\r\n"
        with pytest.raises(MalformedRecord) as err:
            read_tags(data, "csv")
        assert err.value.line == 2

    @pytest.mark.parametrize("fmt", ["ndjson", "csv"])
    def test_empty_noisy_stream_has_no_tags(self, fmt):
        scenario = generate(ScenarioConfig(frame_count=5))
        data = write_detections(scenario.noisy, fmt, tag_fields(scenario.tags))
        assert read_tags(data, fmt) == []

    def test_tag_json(self):
        tag = ProvenanceTag(TagKind.TRANSIENT_FP, source=4)
        assert tag.to_json() == {"kind": "transient_fp", "source": 4}
        assert ProvenanceTag.from_json(tag.to_json()) == tag
