"""Run configuration: training hyperparameters plus pipeline knobs, loaded from YAML."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Sequence

import yaml


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    model_name: str = "vinai/bertweet-base"
    dropout_p: float = 0.1
    trials: int = 20
    cross_val_folds: int = 7
    learning_rate: float = 3e-5
    max_epochs: int = 25
    accumulate_grad_batches: int = 1
    stopping_patience: int = 3
    batch_size: int = 64
    global_seed: int = 2025
    # implementation knobs beyond the core training parameters
    weight_decay: float = 0.01  # torch convention: effective lambda = learning_rate * weight_decay
    max_length: int = 128
    eval_batch_size: int = 256
    label_source: str = "ar"
    class_weighting: bool = False
    strip_urls: bool = False
    device: str = "auto"
    # self-training
    threshold_start: float = 1.0
    threshold_step: float = 0.05
    threshold_floor: float = 0.7
    max_iterations: int = 20
    score_sample: int = 0  # 0 = score the full unlabeled pool
    retrain_from_scratch: bool = True
    select_best_on: str = "test"

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            expected = _TYPES[f.name]
            if expected is float and isinstance(value, int) and not isinstance(value, bool):
                object.__setattr__(self, f.name, float(value))
                value = float(value)
            if not isinstance(value, expected) or (expected is not bool and isinstance(value, bool)):
                raise ConfigError(f"{f.name} must be {expected.__name__}, got {value!r}")
        for name in ("trials", "cross_val_folds", "learning_rate", "max_epochs", "accumulate_grad_batches",
                     "stopping_patience", "batch_size", "max_length", "eval_batch_size", "max_iterations",
                     "threshold_step"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 <= self.dropout_p < 1:
            raise ConfigError("dropout_p must be in [0, 1)")
        if self.weight_decay < 0 or self.score_sample < 0:
            raise ConfigError("weight_decay and score_sample must be non-negative")
        if self.label_source not in ("ar", "mb", "agree-only"):
            raise ConfigError("label_source must be one of ar, mb, agree-only")
        if self.select_best_on not in ("test", "validate"):
            raise ConfigError("select_best_on must be test or validate")
        if not 0 < self.threshold_floor <= self.threshold_start <= 1:
            raise ConfigError("need 0 < threshold_floor <= threshold_start <= 1")

    @property
    def decay_lambda(self) -> float:
        """Raw decoupled decay coefficient handed to the optimizer."""
        return self.learning_rate * self.weight_decay

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


_TYPES: dict[str, type] = {
    f.name: {"str": str, "int": int, "float": float, "bool": bool}[f.type if isinstance(f.type, str) else f.type.__name__]
    for f in fields(ModelConfig)
}


def _parse_override(item: str) -> tuple[str, Any]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    try:
        value = yaml.safe_load(raw) if raw.strip() else ""
    except yaml.YAMLError:
        value = raw
    return key, value


def load_config(path: str | Path | None = None, overrides: Sequence[str] = ()) -> ModelConfig:
    """Defaults, then the YAML file (flat mapping), then ``key=value`` overrides."""
    values: dict[str, Any] = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: expected a mapping of config keys")
        values.update(loaded)
    for item in overrides:
        key, value = _parse_override(item)
        values[key] = value
    unknown = sorted(set(values) - set(_TYPES))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    for key, value in values.items():
        if _TYPES[key] is str and isinstance(value, (int, float)) and not isinstance(value, bool):
            values[key] = str(value)
    return ModelConfig(**values)
