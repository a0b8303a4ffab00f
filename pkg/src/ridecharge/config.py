"""Experiment configuration: one JSON document, defaults embedded.

Sections: ``grid``, ``world``, ``trips``, ``env``, ``learner``. Any key can be
overridden with a dotted assignment such as ``env.emissions_weight=0``.
"""
from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, fields

from .agents.learner import LearnerConfig
from .env import EnvConfig, WEEK_MINUTES
from .trips import SyntheticParams, SyntheticTripModel, TripModel, ZoneGrid
from .world import WorldConfig

CONFIG_ENV_VAR = "EV_SIM_CONFIG"


def _synthetic_defaults() -> dict:
    d = asdict(SyntheticParams())
    # speeds live under world.speeds
    for k in ("offpeak_mph", "peak_mph", "peak_windows"):
        d.pop(k)
    d["surge_windows"] = [list(w) for w in d["surge_windows"]]
    d["demand_by_hour"] = list(d["demand_by_hour"])
    return d


def default_config() -> dict:
    return {
        "grid": ZoneGrid().to_dict(),
        "world": WorldConfig().to_dict(),
        "trips": {"model": None, "synthetic": _synthetic_defaults()},
        "env": {"emissions_weight": 0.05, "horizon_min": WEEK_MINUTES, "reserve_kwh": 2.0,
                "start_zone": None, "seed": 0},
        "learner": asdict(LearnerConfig()),
    }


class ConfigError(ValueError):
    pass


def merge(base: dict, update: dict, path: str = "") -> dict:
    """Deep-merge ``update`` into a copy of ``base``; unknown keys are errors."""
    out = copy.deepcopy(base)
    for k, v in update.items():
        key = f"{path}{k}"
        if k not in out:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(out[k], dict) and isinstance(v, dict):
            out[k] = merge(out[k], v, key + ".")
        else:
            out[k] = v
    return out


def parse_override(text: str) -> tuple[list[str], object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_override(cfg: dict, text: str) -> None:
    keys, value = parse_override(text)
    node = cfg
    for i, k in enumerate(keys):
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(f"unknown config key {'.'.join(keys[:i + 1])!r}")
        if i == len(keys) - 1:
            node[k] = value
        else:
            node = node[k]


def load_config(path=None, overrides=()) -> dict:
    """Defaults, then the file at ``path`` (or $EV_SIM_CONFIG), then overrides."""
    cfg = default_config()
    path = path or os.environ.get(CONFIG_ENV_VAR)
    if path:
        with open(path) as fh:
            cfg = merge(cfg, json.load(fh))
    for o in overrides:
        apply_override(cfg, o)
    return cfg


def build_trip_model(cfg: dict, grid: ZoneGrid, world: WorldConfig):
    trips = cfg["trips"]
    if trips.get("model"):
        model = TripModel.load(trips["model"])
        if model.grid.n_zones != grid.n_zones:
            raise ConfigError("trip model grid does not match config grid")
        return model
    syn = dict(trips.get("synthetic") or {})
    known = {f.name for f in fields(SyntheticParams)}
    bad = set(syn) - known
    if bad:
        raise ConfigError(f"unknown synthetic trip keys {sorted(bad)}")
    syn.update(offpeak_mph=world.speeds.offpeak_mph, peak_mph=world.speeds.peak_mph,
               peak_windows=world.speeds.peak_windows)
    return SyntheticTripModel(grid, SyntheticParams(**syn))


def build_env_config(cfg: dict) -> EnvConfig:
    try:
        grid = ZoneGrid.from_dict(cfg["grid"])
        world = WorldConfig.from_dict(cfg["world"])
        e = cfg["env"]
        start = e.get("start_zone")
        ec = EnvConfig(
            world=world, grid=grid, trip_model=build_trip_model(cfg, grid, world),
            emissions_weight=float(e["emissions_weight"]), horizon=float(e["horizon_min"]),
            reserve=float(e["reserve_kwh"]), start_zone=None if start is None else int(start),
            seed=int(e["seed"]),
        )
        ec.validate()
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config: {exc}") from exc
    return ec


def build_learner_config(cfg: dict, **overrides) -> LearnerConfig:
    d = dict(cfg["learner"])
    d.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return LearnerConfig(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad learner config: {exc}") from exc
