"""Run configuration: defaults, YAML loading, overrides and validation.

Precedence is command-line flags over the config file over these defaults.
The file path comes from ``--config`` or the ``ROOMEV_CONFIG`` environment
variable. Every key is checked against the default tree, so a typo is
reported with its full dotted path instead of being silently ignored.
"""
from __future__ import annotations

import copy
import hashlib
import os
from pathlib import Path

import yaml

from roomev import battery as bat
from roomev import envs, plant, surrogate
from roomev.agents import BASELINES, DdpgConfig
from roomev.bundle import dumps

CONFIG_ENV = "ROOMEV_CONFIG"


class ConfigError(ValueError):
    pass


# Open mappings accept arbitrary keys below them.
_OPEN = {("preprocess", "pipelines")}


def defaults() -> dict:
    room_spec = surrogate.room_spec().to_dict()
    weather_spec = surrogate.weather_spec().to_dict()
    for spec in (room_spec, weather_spec):
        del spec["name"], spec["inputs"], spec["outputs"]
    return {
        "seed": 0,
        "output_dir": "runs",
        "plant": plant.PlantConfig().to_dict(),
        "data": {"days": 90, "seed": 7},
        "preprocess": {"enabled": True, "smooth": False, "pipelines": {}},
        "battery": {
            "limits": {"s_min": 20.0, "s_max": 80.0, "p_min": -100.0, "p_max": 100.0, "s_des": 60.0},
            "coefficients": None,
        },
        "surrogate": {
            "room": room_spec,
            "weather": weather_spec,
            "room_train": {"eta": 1e-3, "n_ep": 20, "batch_size": 32, "seed": 0, "split": [0.6, 0.2, 0.2]},
            "weather_train": {"eta": 1e-3, "n_ep": 10, "batch_size": 32, "seed": 0,
                              "split": [0.6, 0.2, 0.2]},
            "horizon": 48,
            "search": {"budget": 8, "horizon": 24, "n_layers": [1, 2, 3], "n_hidden": [10, 20, 30, 40, 60],
                       "eta": [1e-4, 1e-2], "sigma_i": [1e-6, 1e-1], "cell": ["lstm", "gru"]},
        },
        "env": {
            "comfort": {"r_min": 22.5, "r_max": 22.5},
            "alpha": 10.0,
            "alpha_bat": 0.05,
            "prices": {"high": 2.0, "low": 1.0, "high_start": 480, "high_end": 1200},
            "ev": {"departure": 420, "arrival": 1020, "s_des": 60.0, "s_arrival": 30.0},
            "priced": True,
            "disturbance": True,
            "joint_start_minute": 1020,
        },
        "agent": DdpgConfig().to_dict(),
        "eval": {"env": "room", "agents": ["RuleBased", "DDPG"], "reference": "RuleBased",
                 "n_episodes": 100, "seed": 10_000, "trace_episodes": 3,
                 "hdd_days": 56, "hdd_seed": 1},
    }


def _check(node, ref, path: tuple[str, ...]) -> None:
    if path in _OPEN:
        if not isinstance(node, dict):
            raise ConfigError(f"{'.'.join(path)}: expected a mapping")
        return
    if isinstance(ref, dict):
        if not isinstance(node, dict):
            raise ConfigError(f"{'.'.join(path) or '<root>'}: expected a mapping, got {type(node).__name__}")
        for key, value in node.items():
            if key not in ref:
                raise ConfigError(f"unknown config key {'.'.join(path + (str(key),))}")
            _check(value, ref[key], path + (key,))


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def set_path(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def parse_override(item: str) -> tuple[str, object]:
    """``a.b=value`` with the value parsed as YAML (numbers, lists, booleans)."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key.path=value")
    key, raw = item.split("=", 1)
    try:
        return key.strip(), yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override {item!r}: {exc}") from None


def load(path: str | Path | None = None, overrides: dict | None = None) -> dict:
    """Defaults, then the YAML file (argument or ``ROOMEV_CONFIG``), then ``overrides``."""
    cfg = defaults()
    path = path or os.environ.get(CONFIG_ENV) or None
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {p}")
        try:
            data = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{p}: invalid YAML: {exc}") from None
        _check(data, cfg, ())
        cfg = merge(cfg, data)
    for dotted, value in (overrides or {}).items():
        probe: dict = {}
        set_path(probe, dotted, value)
        _check(probe, cfg, ())
        set_path(cfg, dotted, value)
    validate(cfg)
    return cfg


def _build(path: str, fn):
    try:
        return fn()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def validate(cfg: dict) -> None:
    """Construct every typed object once so range errors surface before any work starts."""
    _build("plant", lambda: plant.check_stability(plant.PlantConfig.from_dict(cfg["plant"]).room))
    if int(cfg["data"]["days"]) < 7:
        raise ConfigError("data.days: at least 7 days are required")
    _build("battery.limits", lambda: battery_limits(cfg))
    if cfg["battery"]["coefficients"] is not None:
        _build("battery.coefficients", lambda: bat.BatteryCoefficients(*cfg["battery"]["coefficients"]))
    for which in ("room", "weather"):
        _build(f"surrogate.{which}", lambda: surrogate_spec(cfg, which))
        _build(f"surrogate.{which}_train", lambda: train_config(cfg, which))
    _build("surrogate.search", lambda: search_space(cfg))
    _build("env.comfort", lambda: envs.ComfortBounds(**cfg["env"]["comfort"]))
    _build("env", lambda: envs.RewardConfig(cfg["env"]["alpha"], cfg["env"]["alpha_bat"]))
    _build("env.prices", lambda: envs.PriceSchedule(**cfg["env"]["prices"]))
    _build("env.ev", lambda: envs.EvSchedule(**cfg["env"]["ev"]))
    _build("agent", lambda: ddpg_config(cfg))
    ev = cfg["eval"]
    if ev["env"] not in ("room", "battery", "joint"):
        raise ConfigError(f"eval.env: must be one of room, battery, joint (got {ev['env']!r})")
    if int(ev["n_episodes"]) < 1:
        raise ConfigError("eval.n_episodes: must be >= 1")
    if ev["reference"] not in ev["agents"]:
        raise ConfigError(f"eval.reference: {ev['reference']!r} is not in eval.agents")


def valid_agent_names() -> list[str]:
    return list(BASELINES) + ["DDPG"]


def battery_limits(cfg: dict) -> bat.SafetyLimits:
    return bat.SafetyLimits(**cfg["battery"]["limits"], t_des=envs.L_EP)


def surrogate_spec(cfg: dict, which: str) -> surrogate.SurrogateSpec:
    make = surrogate.room_spec if which == "room" else surrogate.weather_spec
    return make(**cfg["surrogate"][which])


def train_config(cfg: dict, which: str) -> surrogate.TrainConfig:
    return surrogate.TrainConfig(**cfg["surrogate"][f"{which}_train"])


def search_space(cfg: dict) -> surrogate.SearchSpace:
    s = {k: v for k, v in cfg["surrogate"]["search"].items() if k not in ("budget", "horizon")}
    return surrogate.SearchSpace.from_dict(s)


def ddpg_config(cfg: dict) -> DdpgConfig:
    return DdpgConfig(**cfg["agent"])


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(dumps(cfg).encode()).hexdigest()[:12]
