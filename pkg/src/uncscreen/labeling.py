"""Grader-vote aggregation and label-uncertainty scores.

A sample annotated by a panel of graders carries an ordered list of class
votes.  The normalized vote histogram is the empirical distribution of
intra-observer variability; its entropy is the label uncertainty score used
to split samples into simple and hard cases.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Assignment",
    "CasePartition",
    "EmpiricalDistribution",
    "GraderVotes",
    "MajorityLabel",
    "UncertaintyScore",
    "empirical_distribution",
    "entropy_of",
    "majority_label",
    "max_uncertainty",
    "partition_case",
    "uncertainty_score",
    "variability_encoding",
]

MIN_PANEL_VOTES = 3


@dataclass(frozen=True)
class GraderVotes:
    """Ordered class votes cast for one sample by a grader panel."""

    sample_id: str
    votes: tuple[int, ...]
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"class count must be positive, got {self.k}")
        if len(self.votes) < MIN_PANEL_VOTES:
            raise ValueError(
                f"sample {self.sample_id!r}: need at least {MIN_PANEL_VOTES} "
                f"votes, got {len(self.votes)}"
            )
        for v in self.votes:
            if not 0 <= v < self.k:
                raise ValueError(
                    f"sample {self.sample_id!r}: vote {v} outside [0, {self.k})"
                )

    @property
    def m(self) -> int:
        return len(self.votes)


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """Normalized class-vote histogram; entries are rationals m/M."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1:
            raise ValueError("distribution must be a 1-D vector")
        if (probs < 0).any():
            raise ValueError("distribution entries must be nonnegative")
        if abs(float(probs.sum()) - 1.0) > 1e-9:
            raise ValueError(f"distribution sums to {probs.sum()!r}, expected 1")

    @property
    def k(self) -> int:
        return int(self.probs.shape[0])


@dataclass(frozen=True)
class UncertaintyScore:
    """Entropy of an empirical vote distribution (default unit: nats)."""

    value: float


class Assignment(enum.Enum):
    SIMPLE = "simple"
    HARD = "hard"


@dataclass(frozen=True)
class CasePartition:
    threshold: float
    assignment: Assignment

    @property
    def is_hard(self) -> bool:
        return self.assignment is Assignment.HARD


@dataclass(frozen=True, eq=False)
class MajorityLabel:
    """Majority-vote class with its one-hot encoding.

    ``tie`` flags an even split resolved by the lowest class index.
    """

    class_index: int
    one_hot: np.ndarray
    tie: bool = False


def empirical_distribution(votes: GraderVotes) -> EmpiricalDistribution:
    """Per-class fraction of votes: probs[k] = count(votes == k) / M."""
    counts = np.bincount(np.asarray(votes.votes, dtype=np.int64), minlength=votes.k)
    return EmpiricalDistribution(counts / votes.m)


def entropy_of(probs: np.ndarray, base: float = math.e) -> float:
    """Shannon entropy of a probability vector, with 0 * log 0 = 0."""
    p = np.asarray(probs, dtype=np.float64)
    nz = p[p > 0.0]
    h = -float(np.sum(nz * np.log(nz)))
    if base != math.e:
        h /= math.log(base)
    return max(h, 0.0)


def uncertainty_score(
    dist: EmpiricalDistribution, base: float = math.e
) -> UncertaintyScore:
    """Label uncertainty u = -sum_k p_k log p_k of the vote distribution.

    Zero for a unanimous panel, maximal (log K) at the uniform distribution.
    """
    return UncertaintyScore(entropy_of(dist.probs, base=base))


def max_uncertainty(k: int, base: float = math.e) -> float:
    """Upper bound of the uncertainty score: log K in the chosen base."""
    if k < 1:
        raise ValueError(f"class count must be positive, got {k}")
    return math.log(k) / math.log(base) if base != math.e else math.log(k)


def majority_label(votes: GraderVotes) -> MajorityLabel:
    """Class with the most votes; ties go to the lowest class index."""
    counts = np.bincount(np.asarray(votes.votes, dtype=np.int64), minlength=votes.k)
    winner = int(np.argmax(counts))
    tie = int((counts == counts[winner]).sum()) > 1
    one_hot = np.zeros(votes.k, dtype=np.float64)
    one_hot[winner] = 1.0
    return MajorityLabel(class_index=winner, one_hot=one_hot, tie=tie)


def variability_encoding(votes: GraderVotes) -> EmpiricalDistribution:
    """The empirical vote distribution used as a soft training target.

    Identical to :func:`empirical_distribution`; kept as its own operation
    because it serves as the hard-case ground truth.  Collapses to the
    majority one-hot exactly when the panel is unanimous.
    """
    return empirical_distribution(votes)


def partition_case(u: UncertaintyScore, threshold: float) -> CasePartition:
    """Split into simple/hard cases: hard iff u > threshold (strict)."""
    if threshold < 0:
        raise ValueError(f"threshold must be nonnegative, got {threshold}")
    assignment = Assignment.HARD if u.value > threshold else Assignment.SIMPLE
    return CasePartition(threshold=threshold, assignment=assignment)
