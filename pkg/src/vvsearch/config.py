"""Simulation configuration (JSON) with defaults for the desk-scale study."""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path

DEFAULTS: dict = {
    "environment": {
        "file": None,          # path to an environment JSON
        "scenario": None,      # "u" for the built-in U-shaped road
        "density": "medium",   # used when neither file nor scenario is given
        "seed": 1,
        "grid": [6, 6],
        "h_feasible": 120.0,
    },
    "vehicle": {
        "v_min": 36.0,
        "v_max": 44.0,
        "turn_rate": math.pi / 4,
        "dt": 1.0,
        "h_uav": 75.0,
        "n_headings": 16,
        "speed_samples": 5,
    },
    "voxel": {"l_v": 10.0, "corners": False},
    "sensor": {"p_d": 0.8, "mu": 0.164, "R": [[20.0, 0.0], [0.0, 20.0]], "l_max": 300.0},
    "planner": {
        "gamma": 0.1,
        "beta": 1.0,
        "horizons": [1, 2, 3, 5, 7, 9, 13],
        "strides": [1, 1, 1, 2, 2, 2, 4],
        "lambda": None,
        "max_expansions": 150,
        "heading_union": False,
    },
    "poi": {
        "l_c": 5.0,
        "speeds": [5.0, 10.0, 15.0],
        "maneuvers": 15,
        "speed_fn": {},
        "stationary": False,
    },
    "initial": {"x": -350.0, "y": -350.0, "psi": math.pi / 4, "poi_node": None},
    "baseline": {"spacing": 150.0, "anchor": "center", "replay": None},
    "seed": 0,
    "max_steps": 120,
    "localization_threshold": 5.0,
    "cache_dir": None,
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key '{path}{k}'")
        if isinstance(base[k], dict) and k not in ("speed_fn",):
            if not isinstance(v, dict):
                raise ConfigError(f"'{path}{k}' must be an object")
            out[k] = _merge(base[k], v, f"{path}{k}.")
        else:
            out[k] = copy.deepcopy(v)
    return out


def make_config(overrides: dict | None = None) -> dict:
    cfg = _merge(DEFAULTS, overrides or {})
    validate(cfg)
    return cfg


def load_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    cfg = make_config(data)
    env_file = cfg["environment"]["file"]
    if env_file and not Path(env_file).is_absolute():
        cfg["environment"]["file"] = str((Path(path).parent / env_file).resolve())
    return cfg


def validate(cfg: dict) -> None:
    if not cfg["localization_threshold"] > 0:
        raise ConfigError("localization_threshold must be positive")
    if int(cfg["max_steps"]) < 0:
        raise ConfigError("max_steps must be >= 0")
    p = cfg["planner"]
    if len(p["strides"]) != len(p["horizons"]):
        raise ConfigError("planner.strides needs one entry per horizon")
    if cfg["vehicle"]["n_headings"] % 4:
        raise ConfigError("vehicle.n_headings must be a multiple of 4")


def u_example_config() -> dict:
    """Parameters of the illustrative U-road run."""
    return make_config({
        "environment": {"scenario": "u"},
        "vehicle": {"v_min": 18.0, "v_max": 22.0},
        "voxel": {"l_v": 5.0},
        "sensor": {"p_d": 1.0, "mu": 0.0},
        "planner": {"max_expansions": 400},
        "initial": {"x": -75.0, "y": -75.0, "psi": math.pi / 2},
        "max_steps": 20,
    })
