"""Synthetic multi-grader screening data.

Samples live on a latent severity axis: each class has a center on the
axis, features are the axis position times a fixed direction plus isotropic
noise.  Grading difficulty ("ambiguity") is a bell curve over the axis
peaking at the middle class, so borderline samples collect disagreeing
votes and the middle ("suspect") class carries the highest mean label
uncertainty, while clear-cut cases at the extremes are voted unanimously.

Votes follow a sequential panel protocol: graders are drawn without
replacement and vote one at a time through their personal confusion
matrices (blended toward uniform by the sample's ambiguity) until one
class has collected three votes.  If the whole panel votes without any
class reaching three, the full vote list is returned and the majority rule
decides downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import Config, derive_seed
from .dataset import SampleRecord, Split
from .errors import DataError
from .labeling import GraderVotes

__all__ = [
    "CONSENSUS_VOTES",
    "GeneratorSpec",
    "GraderPanel",
    "build_panel",
    "generate_dataset",
    "simulate_votes",
    "split_counts",
]

# votes of one class needed to stop the sequential grading protocol
CONSENSUS_VOTES = 3


@dataclass(frozen=True)
class GraderPanel:
    """A panel of graders, each with a row-stochastic confusion matrix."""

    confusions: np.ndarray  # [G, K, K]; rows: true class -> vote distribution

    def __post_init__(self):
        mats = np.asarray(self.confusions, dtype=np.float64)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise DataError("confusions must have shape [G, K, K]")
        if mats.shape[0] < CONSENSUS_VOTES:
            raise DataError(f"panel needs at least {CONSENSUS_VOTES} graders")
        if (mats < 0).any():
            raise DataError("confusion entries must be nonnegative")
        if np.abs(mats.sum(axis=2) - 1.0).max() > 1e-9:
            raise DataError("every confusion row must sum to 1")
        object.__setattr__(self, "confusions", mats)

    @property
    def graders(self) -> int:
        return self.confusions.shape[0]

    @property
    def k(self) -> int:
        return self.confusions.shape[1]


def build_panel(
    k: int,
    graders: int = 21,
    skill: float = 0.95,
    bias_strength: float = 0.5,
    seed: int = 0,
) -> GraderPanel:
    """Construct a heterogeneous panel.

    Each grader votes the true class with probability ``skill``; the
    remaining mass goes to a personal mix of uniform guessing and a fixed
    bias class, so graders disagree in systematically different ways.
    """
    if not 0.0 <= skill <= 1.0:
        raise DataError("skill must lie in [0, 1]")
    if not 0.0 <= bias_strength <= 1.0:
        raise DataError("bias_strength must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    bias_classes = rng.integers(0, k, size=graders)
    eye = np.eye(k)
    uniform = np.full((k, k), 1.0 / k)
    mats = np.empty((graders, k, k))
    for g in range(graders):
        slack = (1.0 - bias_strength) * uniform + bias_strength * np.tile(
            eye[bias_classes[g]], (k, 1)
        )
        mats[g] = skill * eye + (1.0 - skill) * slack
    return GraderPanel(mats)


def simulate_votes(
    panel: GraderPanel,
    true_class: int,
    ambiguity: float,
    rng: np.random.Generator,
) -> list[int]:
    """Run the sequential grading protocol for one sample.

    Returns the recorded votes: either some class has reached
    ``CONSENSUS_VOTES`` (the final vote completed the consensus), or every
    grader has voted.
    """
    if not 0 <= true_class < panel.k:
        raise DataError(f"true_class {true_class} outside [0, {panel.k})")
    if not 0.0 <= ambiguity <= 1.0:
        raise DataError("ambiguity must lie in [0, 1]")
    order = rng.permutation(panel.graders)
    uniform = np.full(panel.k, 1.0 / panel.k)
    votes: list[int] = []
    counts = np.zeros(panel.k, dtype=np.int64)
    for g in order:
        row = panel.confusions[g, true_class]
        dist = (1.0 - ambiguity) * row + ambiguity * uniform
        vote = int(rng.choice(panel.k, p=dist))
        votes.append(vote)
        counts[vote] += 1
        if counts[vote] == CONSENSUS_VOTES:
            break
    return votes


@dataclass(frozen=True)
class GeneratorSpec:
    """Shape of the synthetic population."""

    k: int = 3
    feature_dim: int = 16
    class_weights: tuple[float, ...] = (0.72, 0.10, 0.18)
    class_separation: float = 2.0
    feature_noise: float = 1.0
    ambiguity_base: float = 0.02
    ambiguity_peak: float = 0.65
    ambiguity_width: float = 0.8
    split_fractions: tuple[float, float, float] = (0.78, 0.17, 0.05)
    # within-class spread along the severity axis
    severity_jitter: float = field(default=0.6)

    def __post_init__(self):
        if self.k < 2:
            raise DataError("k must be at least 2")
        if self.feature_dim < 2:
            raise DataError("feature_dim must be at least 2")
        if len(self.class_weights) != self.k:
            raise DataError(f"class_weights needs {self.k} entries")
        if any(w < 0 for w in self.class_weights) or abs(
            sum(self.class_weights) - 1.0
        ) > 1e-9:
            raise DataError("class_weights must be nonnegative and sum to 1")
        if self.feature_noise <= 0 or self.ambiguity_width <= 0:
            raise DataError("feature_noise and ambiguity_width must be positive")
        if self.severity_jitter < 0:
            raise DataError("severity_jitter must be nonnegative")
        for name in ("ambiguity_base", "ambiguity_peak"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise DataError(f"{name} must lie in [0, 1]")
        if self.ambiguity_base + self.ambiguity_peak > 1.0:
            raise DataError("ambiguity_base + ambiguity_peak must not exceed 1")
        if len(self.split_fractions) != 3 or any(
            f < 0 for f in self.split_fractions
        ) or abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise DataError("split_fractions must be 3 nonnegative values summing to 1")

    @classmethod
    def from_config(cls, cfg: Config) -> "GeneratorSpec":
        return cls(
            k=cfg.k,
            feature_dim=cfg.feature_dim,
            class_weights=cfg.class_weights,
            class_separation=cfg.class_separation,
            feature_noise=cfg.feature_noise,
            ambiguity_base=cfg.ambiguity_base,
            ambiguity_peak=cfg.ambiguity_peak,
            ambiguity_width=cfg.ambiguity_width,
            split_fractions=(cfg.split_train, cfg.split_val, cfg.split_test),
        )

    def class_centers(self) -> np.ndarray:
        """Class positions on the severity axis, middle class at 0."""
        return (np.arange(self.k) - (self.k - 1) / 2.0) * self.class_separation

    def ambiguity_at(self, severity) -> np.ndarray:
        """Grading difficulty as a bell curve over the severity axis."""
        severity = np.asarray(severity, dtype=np.float64)
        bump = np.exp(-(severity**2) / (2.0 * self.ambiguity_width**2))
        return self.ambiguity_base + self.ambiguity_peak * bump


def split_counts(n: int, fractions: tuple[float, float, float]) -> tuple[int, int, int]:
    """Largest-remainder apportionment of n samples over three splits."""
    raw = [n * f for f in fractions]
    counts = [int(x) for x in raw]
    remainders = [x - c for x, c in zip(raw, counts)]
    for _ in range(n - sum(counts)):
        i = max(range(3), key=lambda j: (remainders[j], -j))
        counts[i] += 1
        remainders[i] = -1.0
    return tuple(counts)


def generate_dataset(
    spec: GeneratorSpec,
    panel: GraderPanel,
    n: int,
    seed: int,
) -> list[SampleRecord]:
    """Draw n samples: class, severity, features, then panel votes."""
    if n < 1:
        raise DataError("n must be at least 1")
    if panel.k != spec.k:
        raise DataError(f"panel has {panel.k} classes, spec has {spec.k}")

    sample_rng = np.random.default_rng(derive_seed(seed, "samples"))
    axis_rng = np.random.default_rng(derive_seed(seed, "axis"))
    split_rng = np.random.default_rng(derive_seed(seed, "split"))

    # fixed unit direction of the severity axis in feature space
    direction = axis_rng.normal(size=spec.feature_dim)
    direction /= np.linalg.norm(direction)

    n_train, n_val, _ = split_counts(n, spec.split_fractions)
    shuffled = split_rng.permutation(n)
    split_of = np.empty(n, dtype=object)
    split_of[shuffled[:n_train]] = Split.TRAIN
    split_of[shuffled[n_train : n_train + n_val]] = Split.VAL
    split_of[shuffled[n_train + n_val :]] = Split.TEST

    centers = spec.class_centers()
    weights = np.asarray(spec.class_weights)
    records = []
    for i in range(n):
        true_class = int(sample_rng.choice(spec.k, p=weights))
        severity = centers[true_class] + spec.severity_jitter * sample_rng.normal()
        features = severity * direction + spec.feature_noise * sample_rng.normal(
            size=spec.feature_dim
        )
        ambiguity = float(spec.ambiguity_at(severity))
        votes = simulate_votes(panel, true_class, ambiguity, sample_rng)
        records.append(
            SampleRecord(
                sample_id=f"s{i:06d}",
                features=features,
                true_class=true_class,
                votes=GraderVotes(f"s{i:06d}", tuple(votes), spec.k),
                split=split_of[i],
            )
        )
    return records
