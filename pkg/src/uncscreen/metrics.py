"""Evaluation metrics: confusion counts, per-class F1, SE/SP, ROC/AUC,
uncertainty-bucket accuracy, and severity-vs-uncertainty histograms.

Undefined rates (no positives in truth, empty bucket) are reported as
``None`` and rendered as the literal ``NA`` downstream — never silently 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "BucketRow",
    "ConfusionCounts",
    "Group",
    "RocCurve",
    "accuracy",
    "auc",
    "bucket_accuracy",
    "default_bucket_edges",
    "f1_per_class",
    "roc_curve",
    "sensitivity_specificity",
    "severity_uncertainty_table",
]


class Group(Enum):
    WHOLE_SET = "whole"
    HARD_ONLY = "hard"


@dataclass(frozen=True)
class ConfusionCounts:
    """K-class confusion matrix plus binary counts for the referable collapse."""

    matrix: np.ndarray  # [K, K] of (true, predicted) counts
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.int64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("confusion matrix must be square")
        if (m < 0).any() or min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "matrix", m)

    @property
    def k(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return int(self.matrix.sum())

    @classmethod
    def tally(
        cls,
        true_classes,
        predicted_classes,
        true_referable,
        predicted_referable,
        k: int,
    ) -> "ConfusionCounts":
        matrix = np.zeros((k, k), dtype=np.int64)
        tp = fp = tn = fn = 0
        for t, p, tr, pr in zip(
            true_classes, predicted_classes, true_referable, predicted_referable
        ):
            matrix[t, p] += 1
            if tr and pr:
                tp += 1
            elif tr and not pr:
                fn += 1
            elif not tr and pr:
                fp += 1
            else:
                tn += 1
        return cls(matrix, tp=tp, fp=fp, tn=tn, fn=fn)

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        if self.k != other.k:
            raise ValueError("cannot merge confusion counts of different K")
        return ConfusionCounts(
            self.matrix + other.matrix,
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            tn=self.tn + other.tn,
            fn=self.fn + other.fn,
        )


def f1_per_class(conf: ConfusionCounts) -> np.ndarray:
    """F1 per class; 0 by convention when precision+recall is undefined."""
    m = conf.matrix
    out = np.zeros(conf.k)
    for c in range(conf.k):
        tp = m[c, c]
        denom = 2 * tp + (m[:, c].sum() - tp) + (m[c, :].sum() - tp)
        out[c] = 2 * tp / denom if denom > 0 else 0.0
    return out


def accuracy(conf: ConfusionCounts) -> float:
    if conf.n == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(conf.matrix)) / conf.n


def sensitivity_specificity(
    conf: ConfusionCounts,
) -> tuple[float | None, float | None]:
    """SE = TP/(TP+FN), SP = TN/(TN+FP); None when the denominator is 0."""
    se = conf.tp / (conf.tp + conf.fn) if conf.tp + conf.fn > 0 else None
    sp = conf.tn / (conf.tn + conf.fp) if conf.tn + conf.fp > 0 else None
    return se, sp


@dataclass(frozen=True)
class RocCurve:
    """ROC points from a descending-score sweep, one point per distinct score."""

    scored: tuple[tuple[float, int], ...]  # (score, binary label), sorted desc
    fpr: np.ndarray
    tpr: np.ndarray


def roc_curve(scores, labels) -> RocCurve:
    """Build the ROC curve; ties share one operating point."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.shape != y.shape or s.ndim != 1 or s.size == 0:
        raise ValueError("scores and labels must be equal-length 1-D sequences")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    pos = int(y.sum())
    neg = y.size - pos
    if pos == 0 or neg == 0:
        raise ValueError("need at least one positive and one negative label")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    fpr = [0.0]
    tpr = [0.0]
    tp = fp = 0
    i = 0
    while i < s_sorted.size:
        j = i
        while j < s_sorted.size and s_sorted[j] == s_sorted[i]:
            tp += int(y_sorted[j])
            fp += 1 - int(y_sorted[j])
            j += 1
        fpr.append(fp / neg)
        tpr.append(tp / pos)
        i = j
    return RocCurve(
        scored=tuple((float(a), int(b)) for a, b in zip(s_sorted, y_sorted)),
        fpr=np.asarray(fpr),
        tpr=np.asarray(tpr),
    )


def auc(scores, labels) -> float:
    """Trapezoidal area under the ROC curve.

    Grouping tied scores into single operating points makes this exactly
    the pairwise concordance probability with half credit for ties.
    """
    curve = roc_curve(scores, labels)
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    return float(trapezoid(curve.tpr, curve.fpr))


def default_bucket_edges(k: int, threshold: float = 0.25) -> tuple[float, ...]:
    """Uncertainty bucket edges (nats): 0, the partition threshold, then
    quarter-steps up to the entropy ceiling ln K."""
    top = math.log(k)
    inner = sorted({threshold, 0.5, 0.75})
    edges = [0.0] + [e for e in inner if 0.0 < e < top] + [top]
    return tuple(edges)


@dataclass(frozen=True)
class BucketRow:
    lo: float
    hi: float
    count: int
    accuracy: float | None


def _bucket_index(value: float, edges) -> int:
    """Index of the half-open bucket [e_i, e_{i+1}); the top bucket is closed."""
    last = len(edges) - 2
    for i in range(last + 1):
        if edges[i] <= value < edges[i + 1]:
            return i
    if value == edges[-1]:
        return last
    raise ValueError(f"value {value} outside bucket range [{edges[0]}, {edges[-1]}]")


def bucket_accuracy(u_values, correct, edges) -> list[BucketRow]:
    """Accuracy within each uncertainty bucket; empty buckets report None."""
    edges = [float(e) for e in edges]
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("bucket edges must be strictly increasing")
    u = np.asarray(u_values, dtype=np.float64)
    ok = np.asarray(correct, dtype=bool)
    if u.shape != ok.shape:
        raise ValueError("u_values and correct must have equal length")
    counts = np.zeros(len(edges) - 1, dtype=np.int64)
    hits = np.zeros(len(edges) - 1, dtype=np.int64)
    for value, flag in zip(u, ok):
        i = _bucket_index(float(value), edges)
        counts[i] += 1
        hits[i] += int(flag)
    return [
        BucketRow(
            lo=edges[i],
            hi=edges[i + 1],
            count=int(counts[i]),
            accuracy=float(hits[i] / counts[i]) if counts[i] > 0 else None,
        )
        for i in range(len(edges) - 1)
    ]


def severity_uncertainty_table(
    true_classes, u_values, k: int, edges
) -> list[dict]:
    """Per-class histogram of uncertainty plus the class mean — the data
    behind a severity-versus-uncertainty chart."""
    edges = [float(e) for e in edges]
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("bucket edges must be strictly increasing")
    classes = np.asarray(true_classes, dtype=np.int64)
    u = np.asarray(u_values, dtype=np.float64)
    if classes.shape != u.shape:
        raise ValueError("true_classes and u_values must have equal length")
    rows = []
    for c in range(k):
        mask = classes == c
        mean_u = float(u[mask].mean()) if mask.any() else None
        counts = np.zeros(len(edges) - 1, dtype=np.int64)
        for value in u[mask]:
            counts[_bucket_index(float(value), edges)] += 1
        for i in range(len(edges) - 1):
            rows.append(
                {
                    "class": c,
                    "bucket_lo": edges[i],
                    "bucket_hi": edges[i + 1],
                    "count": int(counts[i]),
                    "class_mean_u": mean_u,
                }
            )
    return rows
