"""Run configuration: one JSON file, explicit seeds, paper-stated defaults.

Unknown keys are rejected with a diagnostic naming the field so typos do
not silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError


@dataclass
class GridConfig:
    dims: list = field(default_factory=lambda: [256, 256, 256])
    spacing: float = 0.5
    origin: list = field(default_factory=lambda: [0.0, 0.0, 0.0])


@dataclass
class ProbeConfig:
    width: int = 880
    height: int = 660
    spacing_mm: float = 0.15
    needle_angle_deg: float = 39.0


@dataclass
class SweepConfig:
    range_deg: float = 30.0
    step_deg: float = 1.0


@dataclass
class CalibrationConfig:
    poses: int = 30
    noise_rot_deg: float = 0.0
    noise_trans_mm: float = 0.0
    trials: int = 1
    pair_counts: list = field(default_factory=lambda: [5, 10, 20, 29])
    all_pairs: bool = False


@dataclass
class FusionConfig:
    offset_mm: float = 0.0
    centerline_step_mm: float = 1.0


@dataclass
class PlannerConfig:
    max_rotation_deg: float = 15.0
    min_doppler_area_mm2: float = 10.0


@dataclass
class RepositionConfig:
    positions: int = 5
    range_major_mm: float = 30.0
    range_minor_mm: float = 10.0
    noise_rot_deg: float = 0.0
    noise_trans_mm: float = 0.0


@dataclass
class RunConfig:
    seed: int = 0
    grid: GridConfig = field(default_factory=GridConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    reposition: RepositionConfig = field(default_factory=RepositionConfig)


def _apply(obj, data, prefix=""):
    fields = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"unknown config field '{prefix}{key}'")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"config field '{prefix}{key}' must be an object")
            _apply(current, value, prefix=f"{prefix}{key}.")
        else:
            expected = type(current)
            if expected in (int, float) and isinstance(value, bool):
                raise ConfigError(f"config field '{prefix}{key}' has wrong type")
            if expected is float and isinstance(value, int):
                value = float(value)
            if not isinstance(value, expected):
                raise ConfigError(
                    f"config field '{prefix}{key}' expects {expected.__name__}")
            setattr(obj, key, value)
    return obj


def load_config(path=None, overrides=None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        _apply(cfg, data)
    for key, value in (overrides or {}).items():
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = getattr(node, part)
        _apply(node, {parts[-1]: value},
               prefix=".".join(parts[:-1]) + "." if len(parts) > 1 else "")
    return cfg
