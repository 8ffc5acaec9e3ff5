"""Objective functions for the three screening streams.

Five components:

- mean squared error for the uncertainty regressor,
- cross entropy against majority one-hot targets (simple cases),
- an uncertainty-guided focal loss against empirical vote distributions
  (hard cases), weighting each term by (1 - p)^(gamma * u),
- a feature decoupling hinge that keeps the hard-case features at least a
  margin min(alpha * u, 1) away, in Pearson distance, from the features of
  the frozen uncertainty regressor,
- their unweighted sum.

Plus the uncertainty-adaptive decision threshold applied to the negative
class probability at inference: tau = 1 - ((K-1)/K) * (1 - u)^beta for a
normalized uncertainty u in [0, 1].
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor

__all__ = [
    "PROB_FLOOR",
    "Hyperparams",
    "adaptive_threshold",
    "cross_entropy",
    "feature_decoupling_loss",
    "joint_loss",
    "mse_loss",
    "normalized_uncertainty",
    "pearson_distance",
    "uncertainty_focal_loss",
]

log = logging.getLogger(__name__)

# floor applied inside every logarithm to guard against log(0)
PROB_FLOOR = 1e-12

# keeps the row-wise correlation denominator finite for degenerate rows;
# negligible against any real feature variance
_VAR_EPS = 1e-24


@dataclass(frozen=True)
class Hyperparams:
    """Loss shaping constants: focal gamma, margin alpha, threshold beta."""

    gamma: float = 4.0
    alpha: float = 1.4
    beta: float = 2.0

    def __post_init__(self):
        for name in ("gamma", "alpha", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def mse_loss(pred, target) -> Tensor:
    """Mean squared error (1/N) sum (target_i - pred_i)^2."""
    pred = as_tensor(pred)
    target_arr = np.asarray(target, dtype=np.float64)
    if pred.data.shape != target_arr.shape:
        raise ValueError(
            f"prediction shape {pred.data.shape} != target shape {target_arr.shape}"
        )
    if target_arr.size == 0:
        raise ValueError("empty batch")
    diff = pred - target_arr
    return (diff * diff).mean()


def _check_rows_normalized(rows: np.ndarray, what: str, tol: float = 1e-4):
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ValueError(f"{what} must be a nonempty [N, K] matrix")
    if (rows < 0).any():
        raise ValueError(f"{what} entries must be nonnegative")
    sums = rows.sum(axis=1)
    worst = float(np.abs(sums - 1.0).max())
    if worst > tol:
        raise ValueError(f"{what} rows must sum to 1 (worst deviation {worst:.2e})")


def cross_entropy(pred_probs, one_hot_targets, floor: float = PROB_FLOOR) -> Tensor:
    """Mean cross entropy -(1/N) sum_i sum_k t_ik log p_ik for one-hot t."""
    pred = as_tensor(pred_probs)
    targets = np.asarray(one_hot_targets, dtype=np.float64)
    if pred.data.shape != targets.shape:
        raise ValueError(
            f"prediction shape {pred.data.shape} != target shape {targets.shape}"
        )
    _check_rows_normalized(pred.data, "probability")
    if not np.all((targets == 0.0) | (targets == 1.0)) or not np.all(
        targets.sum(axis=1) == 1.0
    ):
        raise ValueError("targets must be one-hot rows")
    log_p = pred.clip_min(floor).log()
    return -(log_p * targets).sum(axis=1).mean()


def uncertainty_focal_loss(
    pred_probs, target_dists, u, hp: Hyperparams, floor: float = PROB_FLOOR
) -> Tensor:
    """Cross entropy against vote distributions with focal weights.

    Each term is scaled by (1 - p_ik)^(gamma * u_i), so confident
    predictions on uncertain samples contribute less and the optimizer
    keeps its attention on badly-fit, high-uncertainty cases.  With u = 0
    the weights are identically 1 and the loss reduces to plain cross
    entropy on the same targets.
    """
    pred = as_tensor(pred_probs)
    targets = np.asarray(target_dists, dtype=np.float64)
    u_arr = np.asarray(u, dtype=np.float64)
    n, k = pred.data.shape
    if targets.shape != (n, k):
        raise ValueError(
            f"target shape {targets.shape} != prediction shape {(n, k)}"
        )
    if u_arr.shape != (n,):
        raise ValueError(f"uncertainty shape {u_arr.shape}, expected {(n,)}")
    if (u_arr < 0).any():
        raise ValueError("uncertainty scores must be nonnegative")
    _check_rows_normalized(pred.data, "probability")
    _check_rows_normalized(targets, "target distribution")

    exponent = hp.gamma * u_arr[:, None]  # broadcast over classes
    damping = (1.0 - pred).pow_const(exponent)
    log_p = pred.clip_min(floor).log()
    return -(damping * targets * log_p).sum(axis=1).mean()


def pearson_distance(a, b) -> float:
    """1 minus the Pearson correlation of two feature vectors; range [0, 2].

    A zero-variance vector has no defined correlation; the distance falls
    back to 1 (uncorrelated) with a logged warning.
    """
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.ndim != 1 or bv.ndim != 1 or av.shape != bv.shape:
        raise ValueError("expected two equal-length 1-D vectors")
    if av.size < 2:
        raise ValueError("Pearson distance needs at least 2 components")
    ac = av - av.mean()
    bc = bv - bv.mean()
    va = float(ac @ ac)
    vb = float(bc @ bc)
    if va == 0.0 or vb == 0.0:
        log.warning("Pearson distance on a zero-variance vector; returning 1.0")
        return 1.0
    r = float(ac @ bc) / math.sqrt(va * vb)
    return 1.0 - r


def feature_decoupling_loss(
    features,
    frozen_features,
    u,
    hp: Hyperparams,
    negated: bool = False,
) -> Tensor:
    """Hinge penalty (1/N) sum max(0, min(alpha*u_i, 1) - D_i).

    D_i is the row-wise Pearson distance between the trainable features and
    the frozen uncertainty-stream features (no gradient flows into the
    latter).  The penalty is zero once every distance clears its margin;
    the subgradient at the hinge kink is 0.

    ``negated`` flips the sign to the variant that rewards small distances
    instead; kept only for side-by-side study, never for training.
    """
    f = as_tensor(features)
    f_frozen = np.asarray(
        frozen_features.data if isinstance(frozen_features, Tensor) else frozen_features,
        dtype=np.float64,
    )
    u_arr = np.asarray(u, dtype=np.float64)
    if f.data.ndim != 2 or f.data.shape != f_frozen.shape:
        raise ValueError(
            f"feature shapes differ: {f.data.shape} vs {f_frozen.shape}"
        )
    n, width = f.data.shape
    if width < 2:
        raise ValueError("feature vectors need at least 2 components")
    if u_arr.shape != (n,):
        raise ValueError(f"uncertainty shape {u_arr.shape}, expected {(n,)}")
    if (u_arr < 0).any():
        raise ValueError("uncertainty scores must be nonnegative")

    frozen_centered = f_frozen - f_frozen.mean(axis=1, keepdims=True)
    frozen_var = (frozen_centered * frozen_centered).sum(axis=1)

    centered = f - f.mean(axis=1, keepdims=True)
    var = (centered * centered).sum(axis=1)
    if (var.data * frozen_var < 1e-18).any():
        log.warning(
            "feature decoupling: near-zero variance row, distance treated as 1"
        )
    covariance = (centered * frozen_centered).sum(axis=1)
    correlation = covariance / (var * frozen_var + _VAR_EPS).sqrt()
    distance = 1.0 - correlation

    margin = np.minimum(hp.alpha * u_arr, 1.0)
    penalty = (margin - distance).relu().mean()
    return -penalty if negated else penalty


def joint_loss(focal: Tensor, decoupling: Tensor) -> Tensor:
    """Unweighted sum of the focal and decoupling components."""
    return as_tensor(focal) + as_tensor(decoupling)


def normalized_uncertainty(u: float, k: int, base: float = math.e) -> float:
    """Map a raw uncertainty score onto [0, 1] by dividing by log K."""
    if k < 2:
        raise ValueError(f"need at least 2 classes, got {k}")
    top = math.log(k) / math.log(base) if base != math.e else math.log(k)
    return min(max(u / top, 0.0), 1.0)


def adaptive_threshold(u_norm: float, k: int, hp: Hyperparams) -> float:
    """Uncertainty-adaptive cutoff on the negative-class probability.

    tau = 1 - ((K-1)/K) * (1 - u)^beta, strictly increasing in u for
    beta > 0: the more uncertain a sample, the lower the bar to call it
    referable.  The input is clamped to [0, 1].
    """
    if k < 2:
        raise ValueError(f"need at least 2 classes, got {k}")
    u_clamped = min(max(float(u_norm), 0.0), 1.0)
    return 1.0 - ((k - 1) / k) * (1.0 - u_clamped) ** hp.beta
