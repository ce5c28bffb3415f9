"""Run configuration: one JSON file, resolved against defaults, with a digest."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .cost_model import CONTEXT_FIELDS, Contention, CostModel, DnnProfile, ObjectiveWeights, PowerModel, \
    SystemContext
from .errors import ConfigError, EdgeSplitError
from .predictor import TrainingConfig
from .profiles import PROFILES, get_profile
from .simulator import DEFAULT_BOX, ContextBox

DEFAULTS = {
    "seed": 0,
    "profile": "resnet18_blocks",
    "box": DEFAULT_BOX.to_dict(),
    "power": {},
    "contention": {},
    "weights": asdict(ObjectiveWeights()),
    "sizes": {"train": 5000, "calibration": 1000, "test": 1000},
    "noise_rel_std": 0.02,
    "shift": {
        "measurement": dict(zip(CONTEXT_FIELDS, [10.0, 0.6, 0.5, 640.0, 0.4, 1200.0, 450.0])),
        "rel_std": 0.2,
    },
    "training": {},
    "alpha": 0.1,
    "strategy": "adaptive",
    "scenario": {
        "duration": 86400.0,
        "tick": 86.4,
        "step_rel": [0.05, 0.05, 0.05, 0.03, 0.05, 0.03, 0.0],
        "measurement_rel_std": 0.2,
        "trace": {"pattern": "diurnal", "base": 375.0, "amplitude": 250.0, "step": 300.0},
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key not in ("box",):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Read a JSON config, fill defaults, validate; raises ConfigError."""
    raw = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    cfg = _merge(DEFAULTS, raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    try:
        build_cost_model(cfg)
        build_box(cfg)
        training_config(cfg)
        measurement(cfg)
        if not 0 < float(cfg["alpha"]) < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {cfg['alpha']}")
        for key in ("train", "calibration", "test"):
            if int(cfg["sizes"][key]) < 2:
                raise ConfigError(f"sizes.{key} must be >= 2")
        if float(cfg["noise_rel_std"]) < 0:
            raise ConfigError("noise_rel_std must be >= 0")
        if float(cfg["shift"]["rel_std"]) <= 0:
            raise ConfigError("shift.rel_std must be > 0")
        if int(cfg["seed"]) < 0:
            raise ConfigError("seed must be >= 0")
    except ConfigError:
        raise
    except (EdgeSplitError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None


def digest(payload) -> str:
    """SHA-256 over canonical JSON."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_json_default)
    return hashlib.sha256(text.encode()).hexdigest()


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def build_profile(cfg) -> DnnProfile:
    profile = cfg["profile"]
    if isinstance(profile, str):
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
        return get_profile(profile)
    return DnnProfile.from_dict(profile)


def _dataclass_from(cls, data):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} fields: {', '.join(sorted(unknown))}")
    return cls(**data)


def build_cost_model(cfg) -> CostModel:
    return CostModel(
        build_profile(cfg),
        _dataclass_from(PowerModel, cfg["power"]),
        _dataclass_from(ObjectiveWeights, cfg["weights"]),
        _dataclass_from(Contention, cfg["contention"]),
    )


def build_box(cfg) -> ContextBox:
    return ContextBox.from_dict(cfg["box"])


def training_config(cfg) -> TrainingConfig:
    data = dict(cfg["training"])
    data.setdefault("seed", int(cfg["seed"]))
    return _dataclass_from(TrainingConfig, data)


def measurement(cfg) -> SystemContext:
    m = cfg["shift"]["measurement"]
    if isinstance(m, dict):
        missing = [f for f in CONTEXT_FIELDS if f not in m]
        if missing:
            raise ConfigError(f"shift.measurement is missing: {', '.join(missing)}")
        return SystemContext(**{f: float(m[f]) for f in CONTEXT_FIELDS}).validate()
    return SystemContext.from_array(m).validate()
