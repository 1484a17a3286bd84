"""
core/config.py
--------------
Single source of truth for run configuration.
Exposes a frozen `SimConfig` plus `load_config()`, which layers
(lowest → highest precedence):

    dataclass defaults
    CROSSPULSE_<KEY> environment variables (a local .env is loaded first)
    flat key=value config file (same syntax as .env)
    explicit overrides (CLI flags of the same name)

Usage:
    from core.config import load_config
    cfg = load_config("data/default.cfg", overrides={"t_max": "45"})
"""

from __future__ import annotations
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Mapping, Optional
import math
import os

from dotenv import dotenv_values, load_dotenv

from core.errors import ConfigError
from core.model import LANE_COUNT
from core.queues import DwellParams

ENV_PREFIX = "CROSSPULSE_"


class Scenario(str, Enum):
    S1_PRIORITY = "s1"       # emergency vehicles preempt
    S2_NO_PRIORITY = "s2"    # every vehicle treated alike


class ControllerKind(str, Enum):
    ADAPTIVE = "adaptive"
    FIXED = "fixed"
    GREEDY = "greedy"


@dataclass(frozen=True)
class SimConfig:
    # Demand
    lambda_cv: float = 0.8
    lambda_ev: float = 0.025
    lane_weights: tuple[float, ...] = (1.0,) * LANE_COUNT

    # Protocol
    steps: int = 3600
    t_max: float = 30.0
    scenario: Scenario = Scenario.S1_PRIORITY
    seed: int = 1
    metrics_first_n: int = 3000
    controller: ControllerKind = ControllerKind.ADAPTIVE

    # Geometry / kinematics
    v_cross: float = 10.0
    lane_length_m: float = 100.0
    exit_length_m: float = 100.0
    exit_drain_rate: Optional[float] = None      # m/s of exit space freed; None → v_cross
    vehicle_length_m: float = 5.0
    clearance_s: float = 0.0

    # Queue automaton
    dwell: DwellParams = field(default_factory=DwellParams)

    # Optional rule-change script
    rules: Optional[str] = None

    @property
    def drain_rate(self) -> float:
        return self.v_cross if self.exit_drain_rate is None else self.exit_drain_rate

    @property
    def discharge_rate(self) -> float:
        """Vehicles per second crossing the stop line of a green lane."""
        return self.v_cross / self.vehicle_length_m

    @property
    def emergency_priority(self) -> bool:
        return self.scenario is Scenario.S1_PRIORITY

    def validate(self) -> "SimConfig":
        # comparisons are written so that NaN fails them
        for key in ("lambda_cv", "lambda_ev", "clearance_s"):
            v = getattr(self, key)
            if not (v >= 0 and math.isfinite(v)):
                raise ConfigError(f"{key} must be a finite number >= 0, got {v}", key=key)
        for key in ("v_cross", "lane_length_m", "exit_length_m", "vehicle_length_m", "t_max", "drain_rate"):
            v = getattr(self, key)
            if not (v > 0 and math.isfinite(v)):
                name = "exit_drain_rate" if key == "drain_rate" else key
                raise ConfigError(f"{name} must be a finite number > 0, got {v}", key=name)
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}", key="seed")
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}", key="steps")
        if self.metrics_first_n <= 0:
            raise ConfigError(f"metrics_first_n must be > 0, got {self.metrics_first_n}", key="metrics_first_n")
        if self.vehicle_length_m > self.lane_length_m:
            raise ConfigError("vehicle_length_m exceeds lane_length_m", key="vehicle_length_m")
        if len(self.lane_weights) != LANE_COUNT or any(not (w >= 0 and math.isfinite(w)) for w in self.lane_weights) \
                or sum(self.lane_weights) <= 0:
            raise ConfigError(
                f"lane_weights needs {LANE_COUNT} non-negative weights with a positive sum",
                key="lane_weights",
            )
        return self

    def with_overrides(self, **changes: Any) -> "SimConfig":
        return replace(self, **changes)

# -------- Typed readers (strict: a bad value names its key) --------

def _int(key: str, v: Any) -> int:
    if isinstance(v, bool):
        raise ConfigError(f"{key}: expected an integer, got {v!r}", key=key)
    if isinstance(v, int):
        return v
    try:
        return int(str(v).strip())
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {v!r}", key=key) from None


def _float(key: str, v: Any) -> float:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    try:
        return float(str(v).strip())
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {v!r}", key=key) from None


def _opt_float(key: str, v: Any) -> Optional[float]:
    if v is None or str(v).strip().lower() in {"", "none", "auto"}:
        return None
    return _float(key, v)


def _opt_str(key: str, v: Any) -> Optional[str]:
    s = "" if v is None else str(v).strip()
    return s or None


def _enum(enum_cls: type[Enum]) -> Callable[[str, Any], Enum]:
    def parse(key: str, v: Any) -> Enum:
        if isinstance(v, enum_cls):
            return v
        try:
            return enum_cls(str(v).strip().lower())
        except ValueError:
            allowed = "|".join(m.value for m in enum_cls)
            raise ConfigError(f"{key}: expected one of {allowed}, got {v!r}", key=key) from None
    return parse


def _weights(key: str, v: Any) -> tuple[float, ...]:
    if isinstance(v, (tuple, list)):
        return tuple(_float(key, x) for x in v)
    toks = [t.strip() for t in str(v).split(",") if t.strip()]
    if len(toks) != LANE_COUNT:
        raise ConfigError(f"{key}: expected {LANE_COUNT} comma-separated weights, got {len(toks)}", key=key)
    return tuple(_float(key, t) for t in toks)


# Flat keys accepted in files, env and CLI. dwell_* feed the nested DwellParams.
_READERS: dict[str, Callable[[str, Any], Any]] = {
    "lambda_cv": _float,
    "lambda_ev": _float,
    "lane_weights": _weights,
    "steps": _int,
    "t_max": _float,
    "scenario": _enum(Scenario),
    "seed": _int,
    "metrics_first_n": _int,
    "controller": _enum(ControllerKind),
    "v_cross": _float,
    "lane_length_m": _float,
    "exit_length_m": _float,
    "exit_drain_rate": _opt_float,
    "vehicle_length_m": _float,
    "clearance_s": _float,
    "dwell_a": _float,
    "dwell_y_min": _float,
    "dwell_y_max": _float,
    "rules": _opt_str,
}

CONFIG_KEYS: tuple[str, ...] = tuple(_READERS)
_DWELL_KEYS = {"dwell_a": "a", "dwell_y_min": "y_min", "dwell_y_max": "y_max"}

# -------- Layering --------

def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse a key=value file with python-dotenv's parser (comments, quotes, `export`)."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}", key="config")
    raw = dotenv_values(p)
    out: dict[str, str] = {}
    for k, v in raw.items():
        key = k.strip().lower()
        if key not in _READERS:
            raise ConfigError(f"unknown config key {k!r} in {p}", key=k)
        out[key] = "" if v is None else v
    return out


def _env_layer(env: Mapping[str, str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for key in _READERS:
        v = env.get(ENV_PREFIX + key.upper())
        if v is not None:
            out[key] = v
    return out


def build_config(values: Mapping[str, Any], base: SimConfig | None = None) -> SimConfig:
    """Apply flat key → raw value pairs on top of `base` and validate."""
    base = base or SimConfig()
    changes: dict[str, Any] = {}
    dwell: dict[str, float] = {}
    for key, raw in values.items():
        reader = _READERS.get(key)
        if reader is None:
            raise ConfigError(f"unknown config key {key!r}", key=key)
        parsed = reader(key, raw)
        if key in _DWELL_KEYS:
            dwell[_DWELL_KEYS[key]] = parsed
        else:
            changes[key] = parsed
    if dwell:
        changes["dwell"] = replace(base.dwell, **dwell)
    return replace(base, **changes).validate()


def load_config(path: str | Path | None = None,
                overrides: Mapping[str, Any] | None = None,
                env: Mapping[str, str] | None = None,
                use_dotenv: bool = True) -> SimConfig:
    if env is None:
        if use_dotenv:
            load_dotenv()
        env = os.environ
    values: dict[str, Any] = {}
    values.update(_env_layer(env))
    if path is not None:
        values.update(read_config_file(path))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return build_config(values)


def config_as_flat(cfg: SimConfig) -> dict[str, str]:
    """Inverse of build_config for the flat keys (used to echo a run's settings)."""
    out: dict[str, str] = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "dwell":
            out.update({"dwell_a": repr(v.a), "dwell_y_min": repr(v.y_min), "dwell_y_max": repr(v.y_max)})
        elif f.name == "lane_weights":
            out[f.name] = ",".join(repr(w) for w in v)
        elif isinstance(v, Enum):
            out[f.name] = v.value
        elif v is None:
            out[f.name] = ""
        else:
            out[f.name] = repr(v) if isinstance(v, float) else str(v)
    return out
