"""Numerical verification of the analytic gradients.

Every objective component is evaluated through a small two-hidden-layer
network and its backward-pass gradients are compared against central finite
differences, parameter by parameter.  The relative error of a pair
(analytic a, numeric n) is |a - n| / max(|a|, |n|, 1e-8); a check passes
when the worst error over all parameters stays below the tolerance.

The decoupling hinge is non-differentiable exactly at the kink, so its
check constructs per-sample uncertainties that keep every row a safe
distance (0.3 in margin units) away from it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .labeling import entropy_of
from .losses import (
    Hyperparams,
    cross_entropy,
    feature_decoupling_loss,
    joint_loss,
    mse_loss,
    uncertainty_focal_loss,
)
from .nn import BackboneSpec, ParamStore, forward, init_params

__all__ = [
    "DEFAULT_TOLERANCE",
    "FD_STEP",
    "LOSS_NAMES",
    "GradCheckResult",
    "max_relative_error",
    "run_default_checks",
]

FD_STEP = 1e-4
DEFAULT_TOLERANCE = 1e-3

LOSS_NAMES = ("mse", "cross_entropy", "focal", "decoupling", "joint")

# margin-units clearance kept between every sample and the hinge kink
_KINK_CLEARANCE = 0.3


@dataclass(frozen=True)
class GradCheckResult:
    loss: str
    max_rel_error: float
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def max_relative_error(loss_fn, params: ParamStore, step: float = FD_STEP) -> float:
    """Worst relative error between backward gradients and central differences.

    ``loss_fn`` must rebuild the forward graph from the current parameter
    arrays on every call and return a scalar Tensor; the parameters are
    perturbed in place one component at a time.
    """
    params.zero_grad()
    loss_fn().backward()
    analytic = {name: params[name].grad.reshape(-1).copy() for name in params.names()}

    worst = 0.0
    for name in params.names():
        flat = params[name].data.reshape(-1)
        for idx in range(flat.size):
            saved = flat[idx]
            flat[idx] = saved + step
            upper = float(loss_fn().data)
            flat[idx] = saved - step
            lower = float(loss_fn().data)
            flat[idx] = saved
            numeric = (upper - lower) / (2.0 * step)
            a = float(analytic[name][idx])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
    return worst


def _random_batch(rng: np.random.Generator, n: int, width: int) -> np.ndarray:
    return rng.normal(0.0, 1.0, size=(n, width))


_MIN_FEATURE_VAR = 1e-2
_RELU_CLEARANCE = 0.05


def _hidden_preactivations(
    spec: BackboneSpec, params: ParamStore, x: np.ndarray
) -> list[np.ndarray]:
    """Replay the hidden layers in plain numpy and collect pre-relu values."""
    acts = []
    a = x
    for i in range(len(spec.hidden)):
        z = a @ params[f"layer{i}.w"].data + params[f"layer{i}.b"].data
        acts.append(z)
        a = np.maximum(z, 0.0)
    return acts


def _kink_clear_batch(
    rng: np.random.Generator,
    spec: BackboneSpec,
    param_sets: list[ParamStore],
    n: int,
    width: int,
) -> np.ndarray:
    """Draw input rows that keep every rectifier away from its kink.

    Central differences lie whenever a perturbed parameter flips the sign
    of some hidden pre-activation, so rows are resampled until every
    pre-activation sits at least ``_RELU_CLEARANCE`` from zero (the finite
    step moves them by ~1e-3 at most) under every parameter set the check
    will perturb.  Rows whose features have near-zero variance are also
    rejected: they park the Pearson distance on its degenerate branch.
    """
    batch = np.empty((n, width))
    filled = 0
    for _ in range(500):
        cand = _random_batch(rng, max(2 * n, 16), width)
        ok = np.ones(cand.shape[0], dtype=bool)
        for params in param_sets:
            zs = _hidden_preactivations(spec, params, cand)
            for z in zs:
                ok &= np.abs(z).min(axis=1) > _RELU_CLEARANCE
            ok &= np.maximum(zs[-1], 0.0).var(axis=1) > _MIN_FEATURE_VAR
        keep = cand[ok][: n - filled]
        batch[filled : filled + keep.shape[0]] = keep
        filled += keep.shape[0]
        if filled == n:
            return batch
    raise RuntimeError("could not assemble a batch clear of rectifier kinks")


def _vote_distributions(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    counts = rng.multinomial(5, np.full(k, 1.0 / k), size=n)
    return counts / 5.0


def _blend_params(base: ParamStore, other: ParamStore, weight: float) -> ParamStore:
    """A copy of ``base`` pulled ``weight`` of the way toward ``other``."""
    blended = base.clone()
    for name in blended.names():
        blended[name].data = (1.0 - weight) * base[name].data + weight * other[
            name
        ].data
    return blended


def _row_pearson_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ac = a - a.mean(axis=1, keepdims=True)
    bc = b - b.mean(axis=1, keepdims=True)
    denom = np.sqrt((ac * ac).sum(axis=1) * (bc * bc).sum(axis=1))
    return 1.0 - (ac * bc).sum(axis=1) / denom


def _kink_safe_uncertainties(distances: np.ndarray, hp: Hyperparams) -> np.ndarray:
    """Per-row u whose margins min(alpha*u, 1) sit 0.3 away from the hinge.

    Even rows are made active (margin above the distance), odd rows
    inactive, falling back to the other side when a target margin would
    leave the representable range.
    """
    u = np.empty_like(distances)
    for i, d in enumerate(distances):
        prefer_active = i % 2 == 0
        active_margin = d + _KINK_CLEARANCE
        inactive_margin = d - _KINK_CLEARANCE
        if prefer_active and active_margin <= 0.97:
            margin = active_margin
        elif inactive_margin >= 0.05:
            margin = inactive_margin
        elif active_margin <= 0.97:
            margin = active_margin
        else:
            # distance too close to the ceiling for an active margin and
            # too small for an inactive one cannot happen (d <= 2 and the
            # two windows overlap), but keep a deterministic fallback
            margin = max(inactive_margin, 0.0)
        u[i] = margin / hp.alpha
    return u


def run_default_checks(
    seed: int = 0,
    n: int = 6,
    k: int = 3,
    hp: Hyperparams | None = None,
    step: float = FD_STEP,
) -> list[GradCheckResult]:
    """Check all five objective components on small random networks."""
    hp = hp or Hyperparams()
    rng = np.random.default_rng(seed)
    input_width = 5
    hidden = (8, 6)

    results = []

    # uncertainty regression: identity head, scalar output per sample
    reg_spec = BackboneSpec(input_width, hidden, output_width=1, head="identity")
    reg_params = init_params(reg_spec, seed=seed + 1)
    reg_batch = _kink_clear_batch(rng, reg_spec, [reg_params], n, input_width)
    reg_target = rng.uniform(0.0, 1.1, size=n)

    def mse_fn():
        out, _ = forward(reg_spec, reg_params, reg_batch)
        return mse_loss(out.reshape(n), reg_target)

    results.append(
        GradCheckResult("mse", max_relative_error(mse_fn, reg_params, step))
    )

    # classification: softmax head
    cls_spec = BackboneSpec(input_width, hidden, output_width=k, head="softmax")
    cls_params = init_params(cls_spec, seed=seed + 2)
    cls_batch = _kink_clear_batch(rng, cls_spec, [cls_params], n, input_width)
    one_hot = np.eye(k)[rng.integers(0, k, size=n)]

    def ce_fn():
        probs, _ = forward(cls_spec, cls_params, cls_batch)
        return cross_entropy(probs, one_hot)

    results.append(
        GradCheckResult("cross_entropy", max_relative_error(ce_fn, cls_params, step))
    )

    # focal variant against vote distributions
    focal_params = init_params(cls_spec, seed=seed + 3)
    focal_batch = _kink_clear_batch(rng, cls_spec, [focal_params], n, input_width)
    focal_targets = _vote_distributions(rng, n, k)
    focal_u = np.array([entropy_of(row) for row in focal_targets])

    def focal_fn():
        probs, _ = forward(cls_spec, focal_params, focal_batch)
        return uncertainty_focal_loss(probs, focal_targets, focal_u, hp)

    results.append(
        GradCheckResult("focal", max_relative_error(focal_fn, focal_params, step))
    )

    # decoupling hinge against a frozen twin network
    frozen_params = init_params(cls_spec, seed=seed + 4)
    stranger = init_params(cls_spec, seed=seed + 5)
    ufd_params = _blend_params(frozen_params, stranger, weight=0.3)
    joint_params = _blend_params(frozen_params, stranger, weight=0.35)
    ufd_batch = _kink_clear_batch(
        rng, cls_spec, [frozen_params, ufd_params, joint_params], n, input_width
    )
    _, frozen_feat = forward(cls_spec, frozen_params, ufd_batch)
    frozen_feat = frozen_feat.data.copy()
    _, start_feat = forward(cls_spec, ufd_params, ufd_batch)
    ufd_u = _kink_safe_uncertainties(
        _row_pearson_distances(start_feat.data, frozen_feat), hp
    )

    def ufd_fn():
        _, feat = forward(cls_spec, ufd_params, ufd_batch)
        return feature_decoupling_loss(feat, frozen_feat, ufd_u, hp)

    results.append(
        GradCheckResult("decoupling", max_relative_error(ufd_fn, ufd_params, step))
    )

    # joint objective: focal + decoupling through one shared forward pass
    joint_targets = _vote_distributions(rng, n, k)
    _, joint_start = forward(cls_spec, joint_params, ufd_batch)
    joint_u = _kink_safe_uncertainties(
        _row_pearson_distances(joint_start.data, frozen_feat), hp
    )

    def joint_fn():
        probs, feat = forward(cls_spec, joint_params, ufd_batch)
        return joint_loss(
            uncertainty_focal_loss(probs, joint_targets, joint_u, hp),
            feature_decoupling_loss(feat, frozen_feat, joint_u, hp),
        )

    results.append(
        GradCheckResult("joint", max_relative_error(joint_fn, joint_params, step))
    )
    return results
