"""Three-stream training and uncertainty-routed inference.

The pipeline trains, in order:

1. an uncertainty regressor over all cases (identity head, MSE),
2. a simple-case classifier on low-uncertainty cases (softmax head,
   cross entropy on majority one-hot labels),
3. a hard-case classifier on the rest, initialized by copying the simple
   classifier's weights, trained against the empirical vote distributions
   with the focal + decoupling objective (the regressor stays frozen and
   supplies the reference features for the decoupling hinge).

At inference the regressor's predicted uncertainty routes each sample:
low goes to the simple classifier (argmax decision), high goes to the
hard classifier, where the referable/non-referable call uses the
uncertainty-adaptive threshold on the non-referable probability.

All uncertainties are handled in nats internally; a non-natural log base
only rescales the partition threshold (``threshold_in_nats``).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .config import Config, derive_seed
from .dataset import SampleRecord, Split
from .errors import DataError
from .labeling import UncertaintyScore, partition_case
from .losses import (
    Hyperparams,
    adaptive_threshold,
    cross_entropy,
    feature_decoupling_loss,
    joint_loss,
    mse_loss,
    normalized_uncertainty,
    uncertainty_focal_loss,
)
from .nn import BackboneSpec, ParamStore, forward, init_params, load_weights, save_weights
from .optim import Adam

__all__ = [
    "BUNDLE_FORMAT_VERSION",
    "AblationLevel",
    "EpochLog",
    "Route",
    "ScreeningDecision",
    "StreamBundle",
    "TrainConfig",
    "default_referable_map",
    "infer",
    "infer_batch",
    "load_bundle",
    "partition_records",
    "run_ablation",
    "save_bundle",
    "threshold_in_nats",
    "train_bundle",
    "train_hard_net",
    "train_simple_net",
    "train_uncertainty_net",
]

log = logging.getLogger(__name__)

BUNDLE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for one stream."""

    epochs: int = 100
    batch_size: int = 64
    seed: int = 0
    lr: float = 0.01
    decay_factor: float = 0.5
    decay_patience: int = 5
    decay_min_delta: float = 1e-4
    early_stop: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")

    @classmethod
    def from_config(cls, cfg: Config, seed: int) -> "TrainConfig":
        return cls(
            epochs=cfg.epochs,
            batch_size=cfg.batch_size,
            seed=seed,
            lr=cfg.lr,
            decay_factor=cfg.decay_factor,
            decay_patience=cfg.decay_patience,
            decay_min_delta=cfg.decay_min_delta,
            early_stop=cfg.early_stop,
        )


class AblationLevel(Enum):
    """Cumulative strategy ladder for the hard-case classifier."""

    M1 = "m1"  # one-hot majority targets, plain cross entropy
    M2 = "m2"  # empirical vote-distribution targets
    M3 = "m3"  # + uncertainty-guided focal weighting
    M4 = "m4"  # + feature decoupling hinge


class Route(Enum):
    SIMPLE = "simple"
    HARD = "hard"


@dataclass(frozen=True)
class ScreeningDecision:
    route: Route
    predicted_class: int
    referable: bool
    u_pred: float  # clamped regressor output, nats
    threshold_used: float
    class_probs: np.ndarray


@dataclass
class StreamBundle:
    """The trained triple plus everything inference needs."""

    k: int
    classifier_spec: BackboneSpec
    regressor_spec: BackboneSpec
    us_params: ParamStore
    sc_params: ParamStore
    hc_params: ParamStore
    u_threshold_nats: float
    hyperparams: Hyperparams
    referable_map: tuple[bool, ...]
    sc_only: bool = False

    def __post_init__(self):
        if self.classifier_spec.output_width != self.k:
            raise ValueError("classifier output width must equal k")
        if self.regressor_spec.output_width != 1:
            raise ValueError("regressor output width must be 1")
        if len(self.referable_map) != self.k:
            raise ValueError("referable_map needs one flag per class")
        if all(self.referable_map) or not any(self.referable_map):
            raise ValueError("referable_map must mark both outcomes")


def default_referable_map(k: int) -> tuple[bool, ...]:
    """Class 0 ("unlikely") is non-referable; every other class is referable."""
    return tuple(c != 0 for c in range(k))


def threshold_in_nats(u_threshold: float, log_base: float = math.e) -> float:
    """Partition threshold converted from the configured entropy base to nats."""
    return u_threshold * math.log(log_base)


def partition_records(
    records: list[SampleRecord], threshold_nats: float
) -> tuple[list[SampleRecord], list[SampleRecord]]:
    """Split records into (simple, hard) by strict threshold comparison."""
    simple, hard = [], []
    for rec in records:
        part = partition_case(UncertaintyScore(rec.u), threshold_nats)
        (hard if part.is_hard else simple).append(rec)
    return simple, hard


@dataclass(frozen=True)
class EpochLog:
    """One row of a per-stream training log; epoch 0 is the untrained state."""

    epoch: int
    train_loss: float | None
    val_loss: float
    val_accuracy: float | None
    val_focal: float | None
    val_decoupling: float | None
    lr: float


def _by_split(records: list[SampleRecord]) -> tuple[list[SampleRecord], list[SampleRecord]]:
    train = [r for r in records if r.split is Split.TRAIN]
    val = [r for r in records if r.split is Split.VAL]
    if not train:
        raise DataError("no training samples in the given records")
    if not val:
        log.warning("no validation samples; validating on the training split")
        val = train
    return train, val


def _features(records: list[SampleRecord]) -> np.ndarray:
    return np.stack([r.features for r in records])


def _fit(
    params: ParamStore,
    cfg: TrainConfig,
    n_train: int,
    batch_loss,
    val_metrics,
    select: str,
) -> tuple[ParamStore, list[EpochLog]]:
    """Shared epoch loop: minibatch Adam, plateau decay, best-epoch snapshot.

    ``batch_loss(indices) -> Tensor`` builds the training loss on a batch;
    ``val_metrics() -> dict`` evaluates the validation split (must contain
    "loss"; may add "accuracy", "focal", "decoupling").  ``select`` picks
    the checkpoint: "min_loss" or "max_accuracy" (first best epoch wins).
    """
    optimizer = Adam(
        params,
        lr=cfg.lr,
        decay_factor=cfg.decay_factor,
        decay_patience=cfg.decay_patience,
        decay_min_delta=cfg.decay_min_delta,
    )
    rng = np.random.default_rng(cfg.seed)

    def snapshot_metrics(epoch: int, train_loss: float | None) -> EpochLog:
        m = val_metrics()
        return EpochLog(
            epoch=epoch,
            train_loss=train_loss,
            val_loss=float(m["loss"]),
            val_accuracy=m.get("accuracy"),
            val_focal=m.get("focal"),
            val_decoupling=m.get("decoupling"),
            lr=optimizer.lr,
        )

    def score(entry: EpochLog) -> float:
        if select == "max_accuracy":
            if entry.val_accuracy is None:
                raise ValueError("accuracy selection needs val accuracy")
            return -entry.val_accuracy
        return entry.val_loss

    logs = [snapshot_metrics(0, None)]
    best = logs[0]
    best_params = params.clone()
    best_loss_seen = logs[0].val_loss
    stall = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n_train)
        total = 0.0
        batches = 0
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            params.zero_grad()
            loss = batch_loss(idx)
            loss.backward()
            optimizer.step()
            total += float(loss.data)
            batches += 1
        entry = snapshot_metrics(epoch, total / batches)
        logs.append(entry)
        if score(entry) < score(best):
            best = entry
            best_params = params.clone()
        if entry.val_loss < best_loss_seen - cfg.decay_min_delta:
            best_loss_seen = entry.val_loss
            stall = 0
        else:
            stall += 1
        optimizer.observe_validation(entry.val_loss)
        if cfg.early_stop and stall >= 2 * cfg.decay_patience:
            log.info("early stop at epoch %d (no improvement)", epoch)
            break
    log.info("best epoch %d (val_loss %.6f)", best.epoch, best.val_loss)
    return best_params, logs


def train_uncertainty_net(
    records: list[SampleRecord], cfg: TrainConfig, spec: BackboneSpec
) -> tuple[ParamStore, list[EpochLog]]:
    """Fit the uncertainty regressor on all cases; returns best-epoch params."""
    if spec.head != "identity" or spec.output_width != 1:
        raise ValueError("uncertainty regressor needs a width-1 identity head")
    if not records:
        raise DataError("empty dataset for the uncertainty regressor")
    train, val = _by_split(records)
    x_train, x_val = _features(train), _features(val)
    u_train = np.array([r.u for r in train])
    u_val = np.array([r.u for r in val])
    params = init_params(spec, seed=derive_seed(cfg.seed, "init"))

    def batch_loss(idx):
        out, _ = forward(spec, params, x_train[idx])
        return mse_loss(out.reshape(idx.size), u_train[idx])

    def val_metrics():
        out, _ = forward(spec, params, x_val)
        return {"loss": float(mse_loss(out.reshape(len(val)), u_val).data)}

    return _fit(params, cfg, len(train), batch_loss, val_metrics, select="min_loss")


def train_simple_net(
    records: list[SampleRecord], cfg: TrainConfig, spec: BackboneSpec
) -> tuple[ParamStore, list[EpochLog]]:
    """Fit the simple-case classifier on majority one-hot targets."""
    if spec.head != "softmax":
        raise ValueError("classifier needs a softmax head")
    if not records:
        raise DataError("no simple cases to train on")
    train, val = _by_split(records)
    k = spec.output_width
    present = {r.majority_class for r in train}
    missing = sorted(set(range(k)) - present)
    if missing:
        log.warning("classes %s absent from the simple training subset", missing)
    x_train, x_val = _features(train), _features(val)
    y_train = np.stack([r.majority_one_hot for r in train])
    y_val = np.stack([r.majority_one_hot for r in val])
    params = init_params(spec, seed=derive_seed(cfg.seed, "init"))

    def batch_loss(idx):
        probs, _ = forward(spec, params, x_train[idx])
        return cross_entropy(probs, y_train[idx])

    def val_metrics():
        probs, _ = forward(spec, params, x_val)
        pred = probs.data.argmax(axis=1)
        return {
            "loss": float(cross_entropy(probs, y_val).data),
            "accuracy": float((pred == y_val.argmax(axis=1)).mean()),
        }

    return _fit(params, cfg, len(train), batch_loss, val_metrics, select="max_accuracy")


def _hard_targets(level: AblationLevel, records: list[SampleRecord]) -> np.ndarray:
    if level is AblationLevel.M1:
        return np.stack([r.majority_one_hot for r in records])
    return np.stack([r.empirical for r in records])


def train_hard_net(
    records: list[SampleRecord],
    sc_params: ParamStore,
    us_params: ParamStore,
    cfg: TrainConfig,
    hp: Hyperparams,
    classifier_spec: BackboneSpec,
    regressor_spec: BackboneSpec,
    level: AblationLevel = AblationLevel.M4,
    ufd_weight: float = 1.0,
    ufd_negated: bool = False,
) -> tuple[ParamStore, list[EpochLog]]:
    """Fit the hard-case classifier, transfer-initialized from the simple one.

    The strategy ladder controls targets and loss:
    M1 one-hot + cross entropy, M2 empirical targets, M3 + focal
    weighting, M4 + the decoupling hinge against the frozen regressor's
    features.
    """
    if us_params is None:
        raise DataError("hard-case training requires the trained uncertainty net")
    if not records:
        raise DataError("no hard cases to train on")
    train, val = _by_split(records)
    x_train, x_val = _features(train), _features(val)
    t_train = _hard_targets(level, train)
    t_val = _hard_targets(level, val)
    u_train = np.array([r.u for r in train])
    u_val = np.array([r.u for r in val])

    # the frozen regressor supplies reference features; no gradient flows in
    frozen_train = forward(regressor_spec, us_params, x_train)[1].data.copy()
    frozen_val = forward(regressor_spec, us_params, x_val)[1].data.copy()

    params = sc_params.clone()  # transfer initialization

    def objective(probs: Tensor, feats: Tensor, targets, u, frozen):
        if level is AblationLevel.M1:
            focal = cross_entropy(probs, targets)
        elif level is AblationLevel.M2:
            focal = uncertainty_focal_loss(probs, targets, np.zeros(len(u)), hp)
        else:
            focal = uncertainty_focal_loss(probs, targets, u, hp)
        if level is AblationLevel.M4:
            hinge = feature_decoupling_loss(feats, frozen, u, hp, negated=ufd_negated)
            return joint_loss(focal, ufd_weight * hinge), focal, hinge
        return focal, focal, None

    def batch_loss(idx):
        probs, feats = forward(classifier_spec, params, x_train[idx])
        total, _, _ = objective(
            probs, feats, t_train[idx], u_train[idx], frozen_train[idx]
        )
        return total

    def val_metrics():
        probs, feats = forward(classifier_spec, params, x_val)
        total, focal, hinge = objective(probs, feats, t_val, u_val, frozen_val)
        pred = probs.data.argmax(axis=1)
        majority = np.array([r.majority_class for r in val])
        return {
            "loss": float(total.data),
            "accuracy": float((pred == majority).mean()),
            "focal": float(focal.data),
            "decoupling": None if hinge is None else float(hinge.data),
        }

    return _fit(params, cfg, len(train), batch_loss, val_metrics, select="min_loss")


def train_bundle(
    records: list[SampleRecord],
    cfg: Config,
    level: AblationLevel = AblationLevel.M4,
    shared: tuple | None = None,
) -> tuple[StreamBundle, dict[str, list[EpochLog]]]:
    """Run the full training pipeline on one dataset.

    ``shared`` may carry (us_params, us_logs, sc_params, sc_logs) from a
    previous call so ablation variants reuse the same regressor and simple
    classifier; only the hard-case classifier is retrained.
    """
    if not records:
        raise DataError("empty dataset")
    feature_dim = records[0].features.size
    classifier_spec = BackboneSpec(
        feature_dim, tuple(cfg.hidden_widths), cfg.k, head="softmax"
    )
    regressor_spec = BackboneSpec(
        feature_dim, tuple(cfg.hidden_widths), 1, head="identity"
    )
    hp = Hyperparams(gamma=cfg.gamma, alpha=cfg.alpha, beta=cfg.beta)
    thr = threshold_in_nats(cfg.u_threshold, cfg.log_base)
    simple, hard = partition_records(records, thr)

    if shared is None:
        us_cfg = TrainConfig.from_config(cfg, derive_seed(cfg.seed, "train:us"))
        us_params, us_logs = train_uncertainty_net(records, us_cfg, regressor_spec)
        sc_cfg = TrainConfig.from_config(cfg, derive_seed(cfg.seed, "train:sc"))
        sc_params, sc_logs = train_simple_net(simple, sc_cfg, classifier_spec)
    else:
        us_params, us_logs, sc_params, sc_logs = shared

    logs = {"us": us_logs, "sc": sc_logs}
    sc_only = not any(r.split is Split.TRAIN for r in hard)
    if sc_only:
        log.warning("no hard training cases; hard stream falls back to the simple net")
        hc_params = sc_params.clone()
        logs["hc"] = []
    else:
        hc_cfg = TrainConfig.from_config(cfg, derive_seed(cfg.seed, "train:hc"))
        hc_params, hc_logs = train_hard_net(
            hard,
            sc_params,
            us_params,
            hc_cfg,
            hp,
            classifier_spec,
            regressor_spec,
            level=level,
            ufd_weight=cfg.ufd_weight,
            ufd_negated=cfg.ufd_negated,
        )
        logs["hc"] = hc_logs

    bundle = StreamBundle(
        k=cfg.k,
        classifier_spec=classifier_spec,
        regressor_spec=regressor_spec,
        us_params=us_params,
        sc_params=sc_params,
        hc_params=hc_params,
        u_threshold_nats=thr,
        hyperparams=hp,
        referable_map=default_referable_map(cfg.k),
        sc_only=sc_only,
    )
    return bundle, logs


def run_ablation(
    records: list[SampleRecord],
    cfg: Config,
    levels: tuple[AblationLevel, ...] = tuple(AblationLevel),
) -> dict[AblationLevel, tuple[StreamBundle, dict[str, list[EpochLog]]]]:
    """Train every requested ladder level with shared regressor/classifier."""
    results: dict[AblationLevel, tuple[StreamBundle, dict[str, list[EpochLog]]]] = {}
    shared = None
    for level in levels:
        bundle, logs = train_bundle(records, cfg, level=level, shared=shared)
        if shared is None:
            shared = (bundle.us_params, logs["us"], bundle.sc_params, logs["sc"])
        results[level] = (bundle, logs)
    return results


# ---- inference ---------------------------------------------------------------


def infer_batch(bundle: StreamBundle, features: np.ndarray) -> list[ScreeningDecision]:
    """Route each sample by predicted uncertainty and decide referability."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != bundle.classifier_spec.input_width:
        raise ValueError(
            f"expected feature matrix [N, {bundle.classifier_spec.input_width}], "
            f"got {x.shape}"
        )
    k = bundle.k
    u_cap = math.log(k)
    u_raw = forward(bundle.regressor_spec, bundle.us_params, x)[0].data.reshape(-1)
    u_pred = np.clip(u_raw, 0.0, u_cap)
    sc_probs = forward(bundle.classifier_spec, bundle.sc_params, x)[0].data
    hc_probs = forward(bundle.classifier_spec, bundle.hc_params, x)[0].data
    nonref = [c for c in range(k) if not bundle.referable_map[c]]

    decisions = []
    for i in range(x.shape[0]):
        hard = u_pred[i] > bundle.u_threshold_nats
        if hard:
            probs = hc_probs[i]
            tau = adaptive_threshold(
                normalized_uncertainty(float(u_pred[i]), k),
                k,
                bundle.hyperparams,
            )
            p_nonref = float(probs[nonref].sum())
            referable = p_nonref < tau
            threshold_used = tau
        else:
            probs = sc_probs[i]
            referable = bool(bundle.referable_map[int(probs.argmax())])
            threshold_used = 0.5
        decisions.append(
            ScreeningDecision(
                route=Route.HARD if hard else Route.SIMPLE,
                predicted_class=int(probs.argmax()),
                referable=referable,
                u_pred=float(u_pred[i]),
                threshold_used=threshold_used,
                class_probs=probs.copy(),
            )
        )
    return decisions


def infer(bundle: StreamBundle, features: np.ndarray) -> ScreeningDecision:
    """Single-sample convenience wrapper around infer_batch."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("infer expects a single 1-D feature vector")
    return infer_batch(bundle, x[None, :])[0]


# ---- persistence ---------------------------------------------------------------


def save_bundle(bundle: StreamBundle, out_dir: str | Path) -> dict:
    """Write the three weight files and the bundle manifest; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_weights(out / "us_weights.json", bundle.regressor_spec, bundle.us_params)
    save_weights(out / "sc_weights.json", bundle.classifier_spec, bundle.sc_params)
    save_weights(out / "hc_weights.json", bundle.classifier_spec, bundle.hc_params)
    manifest = {
        "format_version": BUNDLE_FORMAT_VERSION,
        "k": bundle.k,
        "u_threshold_nats": bundle.u_threshold_nats,
        "gamma": bundle.hyperparams.gamma,
        "alpha": bundle.hyperparams.alpha,
        "beta": bundle.hyperparams.beta,
        "referable_map": list(bundle.referable_map),
        "sc_only": bundle.sc_only,
        "weights": {
            "us": "us_weights.json",
            "sc": "sc_weights.json",
            "hc": "hc_weights.json",
        },
    }
    path = out / "bundle.json"
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)
    return manifest


def load_bundle(bundle_dir: str | Path) -> StreamBundle:
    """Reload a bundle written by save_bundle."""
    folder = Path(bundle_dir)
    manifest_path = folder / "bundle.json"
    if not manifest_path.is_file():
        raise DataError(f"bundle manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise DataError(
            f"unsupported bundle format {manifest.get('format_version')!r}"
        )
    names = manifest["weights"]
    for key in ("us", "sc", "hc"):
        if not (folder / names[key]).is_file():
            raise DataError(f"missing weight file: {folder / names[key]}")
    reg_spec, us_params = load_weights(folder / names["us"])
    cls_spec, sc_params = load_weights(folder / names["sc"])
    cls_spec2, hc_params = load_weights(folder / names["hc"])
    if cls_spec2 != cls_spec:
        raise DataError("simple and hard classifiers disagree on architecture")
    return StreamBundle(
        k=int(manifest["k"]),
        classifier_spec=cls_spec,
        regressor_spec=reg_spec,
        us_params=us_params,
        sc_params=sc_params,
        hc_params=hc_params,
        u_threshold_nats=float(manifest["u_threshold_nats"]),
        hyperparams=Hyperparams(
            gamma=float(manifest["gamma"]),
            alpha=float(manifest["alpha"]),
            beta=float(manifest["beta"]),
        ),
        referable_map=tuple(bool(b) for b in manifest["referable_map"]),
        sc_only=bool(manifest.get("sc_only", False)),
    )
