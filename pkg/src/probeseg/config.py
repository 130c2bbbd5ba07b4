"""
Configuration management for probeseg runs
"""

from __future__ import annotations

import dataclasses
import math
import os
from collections.abc import Mapping
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from dotenv import dotenv_values
from platformdirs import user_config_dir

from probeseg.exceptions import ConfigError
from probeseg.microworld import REACH_SHAPES, Layout, Split

ENV_PREFIX = "PROBESEG_"
ORACLE_MODES = ("none", "oracle_interactions", "oracle_masks", "both")
PHASES = ("segmentation", "joint")
MODEL_PRESETS = ("default", "tiny")


@dataclass(frozen=True)
class TrainConfig:
    """Every knob of a training run. Defaults are the desk-scale schedule."""

    preset: str = "desk"
    seed: int = 0
    model: str = "default"
    split: str = "novel_layouts"
    layout: str = "full"
    scenes: int = 64
    scenes_dir: str = ""
    phases: tuple[str, ...] = PHASES
    forces: tuple[float, ...] = (5.0, 30.0, 200.0)
    seg_greedy: int = 10
    seg_random: int = 10
    joint_greedy: int = 5
    joint_random: int = 5
    seg_locations: int = 3000
    joint_locations: int = 3000
    initial_fill: int = 300
    locations_per_cycle: int = 70
    batch_size: int = 64
    seg_k_start: int = 5
    seg_k_end: int = 15
    joint_k_start: int = 5
    joint_k_end: int = 15
    lr: float = 5e-4
    weight_decay: float = 1e-4
    bank_capacity: int = 20000
    theta: float = 0.0
    oracle: str = "none"
    arm_length: float = 1.5
    reach_shape: str = "sphere"
    superpixels: bool = True
    prioritized: bool = True
    noise: bool = True
    texture_amplitude: float = 0.03
    jobs: int = 0
    checkpoint_every: int = 10
    spill_images: bool = False

    def validate(self) -> None:
        if list(self.forces) != sorted(set(self.forces)) or len(self.forces) != 3:
            raise ConfigError(f"forces must be three strictly increasing values, got {self.forces}")
        if any(f <= 0 for f in self.forces):
            raise ConfigError("forces must be positive")
        for key in ("seg_k_start", "seg_k_end", "joint_k_start", "joint_k_end"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.locations_per_cycle < 1:
            raise ConfigError("locations_per_cycle must be >= 1")
        if not self.arm_length > 0:
            raise ConfigError(f"arm_length must be positive (inf allowed), got {self.arm_length}")
        if self.oracle not in ORACLE_MODES:
            raise ConfigError(f"oracle must be one of {', '.join(ORACLE_MODES)}")
        if self.reach_shape not in REACH_SHAPES:
            raise ConfigError(f"reach_shape must be one of {', '.join(REACH_SHAPES)}")
        if self.model not in MODEL_PRESETS:
            raise ConfigError(f"model must be one of {', '.join(MODEL_PRESETS)}")
        if not self.phases or any(p not in PHASES for p in self.phases):
            raise ConfigError(f"phases must be drawn from {', '.join(PHASES)}")
        if self.split not in {s.value for s in Split}:
            raise ConfigError(f"Unknown split: {self.split}")
        if self.layout not in {layout.value for layout in Layout}:
            raise ConfigError(f"Unknown layout: {self.layout}")
        if self.initial_fill < self.batch_size:
            raise ConfigError(
                f"initial_fill ({self.initial_fill}) must be at least batch_size "
                f"({self.batch_size})"
            )
        if self.scenes < 1 and not self.scenes_dir:
            raise ConfigError("scenes must be >= 1 when no scenes_dir is given")

    @property
    def oracle_interactions(self) -> bool:
        return self.oracle in ("oracle_interactions", "both")

    @property
    def oracle_masks(self) -> bool:
        return self.oracle in ("oracle_masks", "both")

    def to_dict(self) -> dict[str, Any]:
        data = dataclasses.asdict(self)
        data["phases"] = list(self.phases)
        data["forces"] = list(self.forces)
        return data

    def to_text(self) -> str:
        """Effective configuration as key=value lines."""
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                text = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                text = "true" if value else "false"
            else:
                text = str(value)
            lines.append(f"{f.name}={text}")
        return "\n".join(lines) + "\n"


PRESETS: dict[str, dict[str, Any]] = {
    "large": {
        "scenes": 200,
        "seg_locations": 65000,
        "joint_locations": 65000,
        "initial_fill": 3000,
        "seg_k_start": 15,
        "seg_k_end": 45,
        "joint_k_start": 15,
        "joint_k_end": 35,
        "checkpoint_every": 50,
    },
    "desk": {},
    "trivial": {"layout": "trivial", "phases": ("segmentation",)},
    "smoke": {
        "model": "tiny",
        "layout": "trivial",
        "scenes": 4,
        "seg_greedy": 2,
        "seg_random": 2,
        "joint_greedy": 2,
        "joint_random": 2,
        "seg_locations": 12,
        "joint_locations": 6,
        "initial_fill": 6,
        "locations_per_cycle": 3,
        "batch_size": 4,
        "seg_k_start": 1,
        "seg_k_end": 2,
        "joint_k_start": 1,
        "joint_k_end": 2,
        "bank_capacity": 100,
        "checkpoint_every": 1,
    },
}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise ValueError("NaN is not allowed")
    return value


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def parse_value(key: str, raw: Any, source: str) -> Any:
    """Convert a raw config value to the type of ``TrainConfig.<key>``."""
    if key not in _FIELD_TYPES:
        raise ConfigError(
            f"Unknown key '{key}' in {source}",
            details=f"Valid keys: {', '.join(sorted(_FIELD_TYPES))}",
        )
    kind = str(_FIELD_TYPES[key])
    if not isinstance(raw, str):
        if kind.startswith("tuple") and isinstance(raw, (list, tuple)):
            raw = ",".join(str(v) for v in raw)
        else:
            raw = str(raw)
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return _parse_float(raw)
        if kind == "bool":
            return _parse_bool(raw)
        if kind == "tuple[float, ...]":
            return tuple(_parse_float(p) for p in raw.split(",") if p.strip())
        if kind == "tuple[str, ...]":
            return tuple(p.strip() for p in raw.split(",") if p.strip())
        return raw.strip()
    except ValueError as e:
        raise ConfigError(f"Invalid value for '{key}' in {source}: {raw!r}", details=str(e))


class RunConfig:
    """
    Effective configuration of one command.

    Precedence, highest first: command-line overrides, ``PROBESEG_<KEY>`` environment
    variables, the key=value config file, the preset's values, built-in defaults.
    """

    def __init__(
        self,
        config_file: str | Path | None = None,
        overrides: Mapping[str, Any] | None = None,
    ) -> None:
        self.config_dir = Path(user_config_dir("probeseg"))
        self.config_path: Path | None = None

        file_values: dict[str, Any] = {}
        if config_file is not None:
            file_values = self._load_config_file(Path(config_file))
            self.config_path = Path(config_file)
        else:
            default_config = self._find_default_config()
            if default_config:
                file_values = self._load_config_file(default_config)
                self.config_path = default_config

        env_values: dict[str, Any] = {}
        for name, value in os.environ.items():
            if not name.startswith(ENV_PREFIX):
                continue
            key = name[len(ENV_PREFIX) :].lower()
            if key in _FIELD_TYPES:
                env_values[key] = parse_value(key, value, f"environment variable {name}")

        cli_values = {
            key: parse_value(key, value, "command-line options")
            for key, value in (overrides or {}).items()
            if value is not None
        }

        layers = [file_values, env_values, cli_values]
        preset = "desk"
        for layer in layers:
            preset = layer.get("preset", preset)
        if preset not in PRESETS:
            raise ConfigError(
                f"Unknown preset '{preset}'", details=f"Choose from {', '.join(PRESETS)}"
            )

        merged: dict[str, Any] = dict(PRESETS[preset])
        self.sources: dict[str, str] = {key: "preset" for key in merged}
        for layer, label in zip(layers, ("file", "env", "cli")):
            merged.update(layer)
            self.sources.update({key: label for key in layer})
        merged["preset"] = preset

        self.train = TrainConfig(**merged)
        self.train.validate()

    def __repr__(self) -> str:
        return (
            f"RunConfig(preset={self.train.preset!r}, seed={self.train.seed}, "
            f"file={self.config_path})"
        )

    @property
    def seed(self) -> int:
        return self.train.seed

    def _load_config_file(self, path: Path) -> dict[str, Any]:
        if not path.exists():
            raise ConfigError(
                f"Config file '{path}' does not exist. "
                "Provide an existing key=value file or remove the --config flag."
            )
        try:
            raw = dotenv_values(path)
        except (OSError, UnicodeDecodeError) as e:
            raise ConfigError(f"Failed to read config file {path}: {e}")
        values: dict[str, Any] = {}
        for key, value in raw.items():
            if value is None:
                raise ConfigError(f"Key '{key}' in {path} has no value")
            values[key.lower()] = parse_value(key.lower(), value, f"config file {path}")
        return values

    def _find_default_config(self) -> Path | None:
        candidate = self.config_dir / "config.env"
        return candidate if candidate.exists() else None
