"""Evaluation reports: metric aggregation, CSV artifacts, and figures.

``evaluate_group`` scores a set of screening decisions against the records'
true classes, for either the whole set or the hard subset (records whose
label uncertainty exceeds the partition threshold).  Writers emit
deterministic CSVs (6 decimal places, ``NA`` for undefined rates) and
matplotlib figures rendered straight to PNG files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .dataset import SampleRecord
from .errors import DataError
from .metrics import (
    BucketRow,
    ConfusionCounts,
    Group,
    accuracy,
    auc,
    bucket_accuracy,
    default_bucket_edges,
    f1_per_class,
    roc_curve,
    sensitivity_specificity,
    severity_uncertainty_table,
)
from .streams import ScreeningDecision, StreamBundle

__all__ = [
    "EvalReport",
    "ablation_rows",
    "evaluate_group",
    "save_ablation_figure",
    "save_bucket_figure",
    "save_roc_figure",
    "save_severity_figure",
    "write_ablation_csv",
    "write_buckets_csv",
    "write_report_csv",
    "write_roc_csv",
    "write_severity_csv",
]

# PNG metadata normally embeds a creation date; suppress it so reruns with
# the same seed produce byte-identical figures
_PNG_META = {"Date": None}


@dataclass(frozen=True)
class EvalReport:
    group: Group
    n: int
    conf: ConfusionCounts
    f1: np.ndarray
    accuracy: float
    se: float | None
    sp: float | None
    auc: float | None
    buckets: list[BucketRow]
    severity: list[dict]
    roc_fpr: np.ndarray | None
    roc_tpr: np.ndarray | None


def evaluate_group(
    records: list[SampleRecord],
    decisions: list[ScreeningDecision],
    bundle: StreamBundle,
    group: Group,
    bucket_edges: tuple[float, ...] | None = None,
) -> EvalReport:
    """Score decisions against true classes for one report group."""
    if len(records) != len(decisions):
        raise ValueError("records and decisions must align")
    if not records:
        raise DataError("nothing to evaluate")
    if group is Group.HARD_ONLY:
        pairs = [
            (r, d)
            for r, d in zip(records, decisions)
            if r.u > bundle.u_threshold_nats
        ]
    else:
        pairs = list(zip(records, decisions))
    if not pairs:
        raise DataError(f"no samples in group {group.value!r}")

    k = bundle.k
    edges = bucket_edges or default_bucket_edges(k, bundle.u_threshold_nats)
    recs = [r for r, _ in pairs]
    decs = [d for _, d in pairs]
    true_classes = [r.true_class for r in recs]
    pred_classes = [d.predicted_class for d in decs]
    true_ref = [bundle.referable_map[c] for c in true_classes]
    pred_ref = [d.referable for d in decs]
    conf = ConfusionCounts.tally(true_classes, pred_classes, true_ref, pred_ref, k)
    se, sp = sensitivity_specificity(conf)

    nonref = [c for c in range(k) if not bundle.referable_map[c]]
    scores = [1.0 - float(d.class_probs[nonref].sum()) for d in decs]
    labels = [int(flag) for flag in true_ref]
    if 0 < sum(labels) < len(labels):
        auc_value = auc(scores, labels)
        curve = roc_curve(scores, labels)
        fpr, tpr = curve.fpr, curve.tpr
    else:
        auc_value, fpr, tpr = None, None, None

    u_values = [r.u for r in recs]
    correct = [t == p for t, p in zip(true_classes, pred_classes)]
    return EvalReport(
        group=group,
        n=len(recs),
        conf=conf,
        f1=f1_per_class(conf),
        accuracy=accuracy(conf),
        se=se,
        sp=sp,
        auc=auc_value,
        buckets=bucket_accuracy(u_values, correct, edges),
        severity=severity_uncertainty_table(true_classes, u_values, k, edges),
        roc_fpr=fpr,
        roc_tpr=tpr,
    )


# ---- CSV writers ---------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.6f}"


def _write_rows(path: str | Path, header: list[str], rows: list[list]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])


def write_report_csv(reports: list[EvalReport], path: str | Path):
    """Flat metrics, one row per group."""
    if not reports:
        raise ValueError("no reports to write")
    k = reports[0].conf.k
    header = ["group", "n", "accuracy", "se", "sp", "auc"] + [
        f"f1_class{c}" for c in range(k)
    ]
    rows = [
        [r.group.value, r.n, r.accuracy, r.se, r.sp, r.auc, *r.f1] for r in reports
    ]
    _write_rows(path, header, rows)


def write_buckets_csv(reports: list[EvalReport], path: str | Path):
    header = ["group", "bucket_lo", "bucket_hi", "count", "accuracy"]
    rows = [
        [r.group.value, b.lo, b.hi, b.count, b.accuracy]
        for r in reports
        for b in r.buckets
    ]
    _write_rows(path, header, rows)


def write_severity_csv(reports: list[EvalReport], path: str | Path):
    header = ["group", "class", "bucket_lo", "bucket_hi", "count", "class_mean_u"]
    rows = [
        [
            r.group.value,
            row["class"],
            row["bucket_lo"],
            row["bucket_hi"],
            row["count"],
            row["class_mean_u"],
        ]
        for r in reports
        for row in r.severity
    ]
    _write_rows(path, header, rows)


def write_roc_csv(reports: list[EvalReport], path: str | Path):
    header = ["group", "fpr", "tpr"]
    rows = []
    for r in reports:
        if r.roc_fpr is None:
            continue
        rows.extend([r.group.value, f, t] for f, t in zip(r.roc_fpr, r.roc_tpr))
    _write_rows(path, header, rows)


def ablation_rows(levels, reports: dict) -> list[list]:
    """Rows for the ablation table: group × variant × (F1 per class, overall).

    ``reports`` maps (group, level) -> EvalReport; row order is fixed as
    whole-set first, then hard-only, ladder order within each.
    """
    rows = []
    for group in (Group.WHOLE_SET, Group.HARD_ONLY):
        for level in levels:
            rep = reports[(group, level)]
            rows.append([group.value, level.value, rep.n, *rep.f1, rep.accuracy])
    return rows


def write_ablation_csv(rows: list[list], k: int, path: str | Path):
    header = ["group", "variant", "n"] + [f"f1_class{c}" for c in range(k)] + [
        "overall_accuracy"
    ]
    _write_rows(path, header, rows)


# ---- figures ---------------------------------------------------------------


def _bucket_labels(buckets: list[BucketRow]) -> list[str]:
    return [f"[{b.lo:.2f}, {b.hi:.2f})" for b in buckets]


def save_bucket_figure(reports: list[EvalReport], path: str | Path):
    """Bar chart of accuracy per uncertainty bucket, one panel per group."""
    fig, axes = plt.subplots(
        1, len(reports), figsize=(5.5 * len(reports), 4.0), squeeze=False
    )
    for ax, rep in zip(axes[0], reports):
        xs = np.arange(len(rep.buckets))
        heights = [b.accuracy if b.accuracy is not None else 0.0 for b in rep.buckets]
        ax.bar(xs, heights, color="#4878d0")
        for x, b in zip(xs, rep.buckets):
            note = "NA" if b.accuracy is None else f"n={b.count}"
            ax.annotate(note, (x, 0.02), ha="center", fontsize=8, rotation=90)
        ax.set_xticks(xs, _bucket_labels(rep.buckets), rotation=30, ha="right")
        ax.set_ylim(0, 1.05)
        ax.set_xlabel("label uncertainty bucket (nats)")
        ax.set_ylabel("accuracy")
        ax.set_title(f"accuracy vs uncertainty — {rep.group.value}")
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)


def save_severity_figure(reports: list[EvalReport], path: str | Path):
    """Per-class uncertainty histograms plus class means, one panel per group."""
    fig, axes = plt.subplots(
        1, len(reports), figsize=(5.5 * len(reports), 4.0), squeeze=False
    )
    palette = ["#4878d0", "#ee854a", "#6acc64", "#d65f5f", "#956cb4"]
    for ax, rep in zip(axes[0], reports):
        classes = sorted({row["class"] for row in rep.severity})
        buckets = sorted({(row["bucket_lo"], row["bucket_hi"]) for row in rep.severity})
        width = 0.8 / len(classes)
        for ci, c in enumerate(classes):
            counts = [
                next(
                    row["count"]
                    for row in rep.severity
                    if row["class"] == c and row["bucket_lo"] == lo
                )
                for lo, _ in buckets
            ]
            mean_u = next(
                row["class_mean_u"] for row in rep.severity if row["class"] == c
            )
            label = f"class {c}" + (
                f" (mean u={mean_u:.3f})" if mean_u is not None else ""
            )
            xs = np.arange(len(buckets)) + ci * width
            ax.bar(xs, counts, width=width, color=palette[ci % len(palette)], label=label)
        ax.set_xticks(
            np.arange(len(buckets)) + 0.4 - width / 2,
            [f"[{lo:.2f}, {hi:.2f})" for lo, hi in buckets],
            rotation=30,
            ha="right",
        )
        ax.set_xlabel("label uncertainty bucket (nats)")
        ax.set_ylabel("samples")
        ax.set_title(f"severity vs uncertainty — {rep.group.value}")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)


def save_roc_figure(reports: list[EvalReport], path: str | Path):
    """ROC curves for every group that has both outcomes in truth."""
    fig, ax = plt.subplots(figsize=(5.0, 4.6))
    drew = False
    for rep, color in zip(reports, ("#4878d0", "#d65f5f", "#6acc64")):
        if rep.roc_fpr is None:
            continue
        label = f"{rep.group.value} (AUC={rep.auc:.4f})"
        ax.plot(rep.roc_fpr, rep.roc_tpr, color=color, label=label)
        drew = True
    ax.plot([0, 1], [0, 1], linestyle="--", color="#999999", linewidth=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title("referable screening ROC")
    if drew:
        ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)


def save_ablation_figure(rows: list[list], path: str | Path):
    """Overall accuracy per strategy level, grouped by report group."""
    groups = []
    for row in rows:
        if row[0] not in groups:
            groups.append(row[0])
    variants = []
    for row in rows:
        if row[1] not in variants:
            variants.append(row[1])
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    width = 0.8 / len(groups)
    for gi, group in enumerate(groups):
        accs = [row[-1] for row in rows if row[0] == group]
        xs = np.arange(len(variants)) + gi * width
        ax.bar(xs, accs, width=width, label=group)
    ax.set_xticks(np.arange(len(variants)) + 0.4 - width / 2, [v.upper() for v in variants])
    ax.set_ylim(0, 1.05)
    ax.set_xlabel("strategy level")
    ax.set_ylabel("overall accuracy")
    ax.set_title("ablation ladder")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)
