"""
Unit tests for config module
"""

import math

import pytest

from probeseg.config import PRESETS, RunConfig, TrainConfig, parse_value
from probeseg.exceptions import ConfigError


def test_defaults_are_desk_scale():
    config = RunConfig()
    assert config.train == TrainConfig()
    assert config.train.forces == (5.0, 30.0, 200.0)
    assert config.config_path is None
    assert config.sources == {}


def test_preset_values_apply():
    config = RunConfig(overrides={"preset": "smoke"})
    assert config.train.model == "tiny"
    assert config.train.batch_size == 4
    assert config.sources["batch_size"] == "preset"
    assert config.sources["preset"] == "cli"


def test_every_preset_validates():
    for name in PRESETS:
        RunConfig(overrides={"preset": name}).train.validate()


def test_large_preset_schedule():
    train = RunConfig(overrides={"preset": "large"}).train
    assert train.seg_locations == 65000
    assert (train.seg_k_start, train.seg_k_end) == (15, 45)
    assert (train.joint_k_start, train.joint_k_end) == (15, 35)


def test_layers_override_in_order(tmp_path, monkeypatch):
    config_file = tmp_path / "run.env"
    config_file.write_text("preset=smoke\nseed=1\nscenes=3\nlr=0.01\n")
    monkeypatch.setenv("PROBESEG_SEED", "2")
    monkeypatch.setenv("PROBESEG_SCENES", "5")

    config = RunConfig(config_file, overrides={"seed": 3})
    assert config.seed == 3
    assert config.train.scenes == 5
    assert config.train.lr == pytest.approx(0.01)
    assert config.train.batch_size == 4
    assert config.sources["seed"] == "cli"
    assert config.sources["scenes"] == "env"
    assert config.sources["lr"] == "file"
    assert config.config_path == config_file


def test_none_overrides_are_ignored():
    config = RunConfig(overrides={"seed": None, "jobs": None})
    assert config.seed == 0
    assert "seed" not in config.sources


def test_default_config_file_is_used(tmp_path, monkeypatch):
    monkeypatch.setattr("probeseg.config.user_config_dir", lambda _name: str(tmp_path))
    (tmp_path / "config.env").write_text("seed=11\n")
    config = RunConfig()
    assert config.seed == 11
    assert config.config_path == tmp_path / "config.env"


def test_missing_config_file_raises_error(tmp_path):
    """Explicit config path must exist instead of silently falling back"""
    missing = tmp_path / "missing.env"
    with pytest.raises(ConfigError) as exc_info:
        RunConfig(missing)
    assert "does not exist" in str(exc_info.value)
    assert str(missing) in str(exc_info.value)


def test_key_without_value(tmp_path):
    config_file = tmp_path / "run.env"
    config_file.write_text("superpixels\n")
    with pytest.raises(ConfigError, match="has no value"):
        RunConfig(config_file)


def test_unknown_key_names_the_source(tmp_path):
    config_file = tmp_path / "run.env"
    config_file.write_text("learning_rate=0.1\n")
    with pytest.raises(ConfigError) as exc_info:
        RunConfig(config_file)
    assert "Unknown key 'learning_rate'" in str(exc_info.value)
    assert "lr" in exc_info.value.details


def test_unknown_preset():
    with pytest.raises(ConfigError, match="Unknown preset"):
        RunConfig(overrides={"preset": "huge"})


def test_env_values_are_typed(monkeypatch):
    monkeypatch.setenv("PROBESEG_SUPERPIXELS", "off")
    monkeypatch.setenv("PROBESEG_ARM_LENGTH", "inf")
    train = RunConfig().train
    assert train.superpixels is False
    assert math.isinf(train.arm_length)


def test_unrelated_env_vars_ignored(monkeypatch):
    monkeypatch.setenv("PROBESEG_NOT_A_KEY", "1")
    assert RunConfig().train == TrainConfig()


class TestParseValue:
    @pytest.mark.parametrize(
        "key,raw,expected",
        [
            ("seed", "42", 42),
            ("lr", "1e-3", 1e-3),
            ("prioritized", "yes", True),
            ("noise", "0", False),
            ("forces", "1, 2,3", (1.0, 2.0, 3.0)),
            ("phases", "joint", ("joint",)),
            ("oracle", " both ", "both"),
            ("forces", [4, 8, 16], (4.0, 8.0, 16.0)),
            ("scenes", 7, 7),
        ],
    )
    def test_conversions(self, key, raw, expected):
        assert parse_value(key, raw, "test") == expected

    @pytest.mark.parametrize(
        "key,raw", [("seed", "1.5"), ("superpixels", "maybe"), ("lr", "nan"), ("forces", "a,b")]
    )
    def test_invalid_values(self, key, raw):
        with pytest.raises(ConfigError, match=f"Invalid value for '{key}' in test"):
            parse_value(key, raw, "test")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="Unknown key 'nope' in somewhere"):
            parse_value("nope", "1", "somewhere")


class TestValidate:
    @pytest.mark.parametrize(
        "overrides,message",
        [
            ({"forces": "30,5,200"}, "strictly increasing"),
            ({"forces": "5,30"}, "strictly increasing"),
            ({"forces": "-1,5,30"}, "positive"),
            ({"seg_k_end": "0"}, "seg_k_end"),
            ({"arm_length": "0"}, "arm_length"),
            ({"oracle": "human"}, "oracle"),
            ({"reach_shape": "cube"}, "reach_shape"),
            ({"model": "huge"}, "model"),
            ({"phases": "warmup"}, "phases"),
            ({"split": "novel_colors"}, "Unknown split"),
            ({"layout": "maze"}, "Unknown layout"),
            ({"batch_size": "500"}, "initial_fill"),
            ({"scenes": "0"}, "scenes"),
        ],
    )
    def test_rejects(self, overrides, message):
        with pytest.raises(ConfigError, match=message):
            RunConfig(overrides=overrides)

    def test_scenes_dir_allows_zero_scenes(self):
        train = RunConfig(overrides={"scenes": 0, "scenes_dir": "/data/scenes"}).train
        assert train.scenes_dir == "/data/scenes"

    def test_oracle_flags(self):
        both = TrainConfig(oracle="both")
        assert both.oracle_interactions and both.oracle_masks
        masks = TrainConfig(oracle="oracle_masks")
        assert masks.oracle_masks and not masks.oracle_interactions
        assert not TrainConfig().oracle_interactions


def test_to_text_reloads_to_same_config(tmp_path):
    original = RunConfig(overrides={"preset": "smoke", "seed": 9, "noise": False}).train
    text = original.to_text()
    assert "forces=5.0,30.0,200.0\n" in text
    assert "noise=false\n" in text
    assert "phases=segmentation,joint\n" in text

    config_file = tmp_path / "effective.env"
    config_file.write_text(text)
    assert RunConfig(config_file).train == original


def test_to_dict_uses_lists():
    data = TrainConfig().to_dict()
    assert data["forces"] == [5.0, 30.0, 200.0]
    assert data["phases"] == ["segmentation", "joint"]
