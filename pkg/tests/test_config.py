"""Tests for configuration."""

import pytest

from src.config import DistancingConfig, FilterConfig, RunConfig, load_config_file, log_level_from_env
from src.errors import InputOutputError, InvalidConfig


class TestRunConfig:
    def test_defaults(self, monkeypatch):
        monkeypatch.delenv("SDTRANSIT_SCORE_THRESHOLD", raising=False)
        monkeypatch.delenv("SDTRANSIT_WORKERS", raising=False)
        config = RunConfig()
        assert config.score_threshold == 0.5
        assert config.workers == 4
        assert config.label == "person"
        config.validate()

    def test_environment(self, monkeypatch):
        monkeypatch.setenv("SDTRANSIT_SCORE_THRESHOLD", "0.7")
        monkeypatch.setenv("SDTRANSIT_WORKERS", "2")
        config = RunConfig()
        assert config.score_threshold == 0.7
        assert config.workers == 2

    def test_paths_coerced(self):
        config = RunConfig(input_path="in.ndjson", output_path="out.ndjson")
        assert config.input_path.name == "in.ndjson"
        assert config.output_path.suffix == ".ndjson"

    @pytest.mark.parametrize("kwargs, field", [
        ({"score_threshold": 1.5}, "score_threshold"),
        ({"workers": 0}, "workers"),
        ({"fmt": "xml"}, "fmt"),
        ({"frames": (5, 2)}, "frames"),
        ({"label": ""}, "label"),
    ])
    def test_invalid(self, kwargs, field):
        with pytest.raises(InvalidConfig) as err:
            RunConfig(**kwargs).validate()
        assert err.value.field == field

    def test_nested_configs_validated(self):
        with pytest.raises(InvalidConfig):
            RunConfig(filter=FilterConfig(gap_frames=0)).validate()


class TestDistancingConfig:
    def test_eps_defaults_to_warn_distance(self):
        assert DistancingConfig(warn_distance=90).effective_eps == 90
        assert DistancingConfig(eps=30).effective_eps == 30

    @pytest.mark.parametrize("kwargs", [
        {"danger_distance": 0},
        {"danger_distance": 120, "warn_distance": 120},
        {"eps": -1},
        {"min_pts": 0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidConfig):
            DistancingConfig(**kwargs).validate()


class TestConfigFile:
    def test_load(self, tmp_path):
        path = tmp_path / "sdtransit.toml"
        path.write_text("[filter]\nmin_persistence_frames = 4\n\n[distancing]\ndanger_distance = 50.0\n")
        data = load_config_file(path)
        assert data["filter"] == {"min_persistence_frames": 4}
        assert data["distancing"]["danger_distance"] == 50.0

    def test_unknown_table(self, tmp_path):
        path = tmp_path / "sdtransit.toml"
        path.write_text("[tracker]\nk = 1\n")
        with pytest.raises(InvalidConfig):
            load_config_file(path)

    def test_missing(self, tmp_path):
        with pytest.raises(InputOutputError):
            load_config_file(tmp_path / "none.toml")


def test_log_level_from_env(monkeypatch):
    monkeypatch.setenv("SDTRANSIT_LOG", "debug")
    assert log_level_from_env() == "DEBUG"
