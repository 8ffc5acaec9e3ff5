"""Flat ``key = value`` run configuration and seed derivation.

One text file configures the whole pipeline.  Lines are ``key = value``
pairs; ``#`` starts a comment; blank lines are ignored.  Every key has a
typed default below, and unknown keys are rejected by name so typos never
silently fall back to defaults.

All randomness flows from the single ``seed`` key.  Stage-specific seeds
are derived by hashing ``"{seed}:{name}"`` with SHA-256 and taking the
first 8 bytes (little-endian), so each stage's stream is stable even when
stages are rerun independently.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError

__all__ = ["Config", "derive_seed", "load_config", "parse_config_text"]


def derive_seed(master: int, name: str) -> int:
    """Stable per-stage RNG seed derived from the master seed and a label."""
    digest = hashlib.sha256(f"{master}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class Config:
    """Typed snapshot of every run setting, file overrides applied."""

    # randomness
    seed: int = 0

    # label model / losses
    k: int = 3
    log_base: float = math.e
    u_threshold: float = 0.25
    gamma: float = 4.0
    alpha: float = 1.4
    beta: float = 2.0
    ufd_weight: float = 1.0
    ufd_negated: bool = False

    # backbone
    feature_dim: int = 16
    hidden_widths: tuple[int, ...] = (64, 32)

    # training
    epochs: int = 100
    batch_size: int = 64
    lr: float = 0.01
    decay_factor: float = 0.5
    decay_patience: int = 5
    decay_min_delta: float = 1e-4
    early_stop: bool = False

    # synthetic generator
    n: int = 1000
    class_weights: tuple[float, ...] = (0.72, 0.10, 0.18)
    class_separation: float = 2.0
    feature_noise: float = 1.0
    ambiguity_base: float = 0.02
    ambiguity_peak: float = 0.65
    ambiguity_width: float = 0.8
    split_train: float = 0.78
    split_val: float = 0.17
    split_test: float = 0.05

    # grading panel
    graders: int = 21
    panel_skill: float = 0.95
    panel_bias_strength: float = 0.5

    def __post_init__(self):
        if self.k < 2:
            raise DataError("k must be at least 2")
        if self.log_base <= 1.0:
            raise DataError("log_base must be greater than 1")
        if self.u_threshold < 0:
            raise DataError("u_threshold must be nonnegative")
        for name in ("gamma", "alpha", "beta", "ufd_weight"):
            if getattr(self, name) < 0:
                raise DataError(f"{name} must be nonnegative")
        if self.feature_dim < 2:
            raise DataError("feature_dim must be at least 2")
        if not self.hidden_widths or any(w < 1 for w in self.hidden_widths):
            raise DataError("hidden_widths must be positive integers")
        for name in ("epochs", "batch_size", "decay_patience", "n", "graders"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be positive")
        for name in ("lr", "decay_min_delta", "feature_noise"):
            if getattr(self, name) <= 0:
                raise DataError(f"{name} must be positive")
        if not 0 < self.decay_factor <= 1:
            raise DataError("decay_factor must be in (0, 1]")
        if len(self.class_weights) != self.k:
            raise DataError(
                f"class_weights needs {self.k} entries, got {len(self.class_weights)}"
            )
        if any(w < 0 for w in self.class_weights) or abs(
            sum(self.class_weights) - 1.0
        ) > 1e-9:
            raise DataError("class_weights must be nonnegative and sum to 1")
        for name in ("ambiguity_base", "ambiguity_peak"):
            if not 0 <= getattr(self, name) <= 1:
                raise DataError(f"{name} must lie in [0, 1]")
        if self.ambiguity_base + self.ambiguity_peak > 1:
            raise DataError("ambiguity_base + ambiguity_peak must not exceed 1")
        if self.ambiguity_width <= 0:
            raise DataError("ambiguity_width must be positive")
        splits = (self.split_train, self.split_val, self.split_test)
        if any(s < 0 for s in splits) or abs(sum(splits) - 1.0) > 1e-9:
            raise DataError("split fractions must be nonnegative and sum to 1")
        if self.graders < 3:
            raise DataError("graders must be at least 3")
        if not 0 <= self.panel_skill <= 1:
            raise DataError("panel_skill must lie in [0, 1]")
        if not 0 <= self.panel_bias_strength <= 1:
            raise DataError("panel_bias_strength must lie in [0, 1]")

    def to_dict(self) -> dict:
        """JSON-ready mapping with deterministic key order."""
        out = {}
        for field in sorted(dataclasses.fields(self), key=lambda f: f.name):
            value = getattr(self, field.name)
            out[field.name] = list(value) if isinstance(value, tuple) else value
        return out


def _parse_bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_int_tuple(raw: str) -> tuple[int, ...]:
    return tuple(int(part.strip()) for part in raw.split(",") if part.strip())


def _parse_float_tuple(raw: str) -> tuple[float, ...]:
    return tuple(float(part.strip()) for part in raw.split(",") if part.strip())


_PARSERS = {
    int: int,
    float: float,
    bool: _parse_bool,
    tuple[int, ...]: _parse_int_tuple,
    tuple[float, ...]: _parse_float_tuple,
}

_FIELD_TYPES = {
    "seed": int,
    "k": int,
    "log_base": float,
    "u_threshold": float,
    "gamma": float,
    "alpha": float,
    "beta": float,
    "ufd_weight": float,
    "ufd_negated": bool,
    "feature_dim": int,
    "hidden_widths": tuple[int, ...],
    "epochs": int,
    "batch_size": int,
    "lr": float,
    "decay_factor": float,
    "decay_patience": int,
    "decay_min_delta": float,
    "early_stop": bool,
    "n": int,
    "class_weights": tuple[float, ...],
    "class_separation": float,
    "feature_noise": float,
    "ambiguity_base": float,
    "ambiguity_peak": float,
    "ambiguity_width": float,
    "split_train": float,
    "split_val": float,
    "split_test": float,
    "graders": int,
    "panel_skill": float,
    "panel_bias_strength": float,
}


def parse_config_text(text: str, source: str = "<config>") -> Config:
    """Parse ``key = value`` lines into a Config, rejecting unknown keys."""
    overrides: dict[str, object] = {}
    unknown: list[str] = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        if key not in _FIELD_TYPES:
            unknown.append(key)
            continue
        if key in overrides:
            raise DataError(f"{source}:{lineno}: duplicate key {key!r}")
        parser = _PARSERS[_FIELD_TYPES[key]]
        try:
            overrides[key] = parser(raw_value)
        except ValueError as exc:
            raise DataError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
    if unknown:
        raise DataError(f"{source}: unknown config keys: {', '.join(sorted(unknown))}")
    return Config(**overrides)


def load_config(path: str | Path | None) -> Config:
    """Read a config file, or return pure defaults when no path is given."""
    if path is None:
        return Config()
    p = Path(path)
    if not p.is_file():
        raise DataError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"), source=str(p))
