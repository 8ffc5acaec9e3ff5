"""Evaluation metrics against independent oracles.

The AUC oracle is the O(n^2) Mann-Whitney pairwise count: over all
(positive, negative) pairs, credit 1 when the positive outscores the
negative and 1/2 on ties.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uncscreen.metrics import (
    BucketRow,
    ConfusionCounts,
    accuracy,
    auc,
    bucket_accuracy,
    default_bucket_edges,
    f1_per_class,
    roc_curve,
    sensitivity_specificity,
    severity_uncertainty_table,
)


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


# ---- confusion + derived rates -----------------------------------------------


def test_f1_symmetric_two_class():
    conf = ConfusionCounts(np.array([[2, 1], [1, 2]]), tp=2, fp=1, tn=2, fn=1)
    np.testing.assert_allclose(f1_per_class(conf), [2 / 3, 2 / 3])


def test_f1_absent_class_is_zero():
    conf = ConfusionCounts(np.array([[5, 0], [0, 0]]), tp=0, fp=0, tn=5, fn=0)
    np.testing.assert_allclose(f1_per_class(conf), [1.0, 0.0])


def test_accuracy_and_tally():
    conf = ConfusionCounts.tally(
        true_classes=[0, 0, 1, 2, 2],
        predicted_classes=[0, 1, 1, 2, 0],
        true_referable=[False, False, True, True, True],
        predicted_referable=[False, True, True, True, False],
        k=3,
    )
    assert accuracy(conf) == pytest.approx(3 / 5)
    assert (conf.tp, conf.fp, conf.tn, conf.fn) == (2, 1, 1, 1)
    se, sp = sensitivity_specificity(conf)
    assert se == pytest.approx(2 / 3)
    assert sp == pytest.approx(1 / 2)


def test_rates_none_when_degenerate():
    conf = ConfusionCounts.tally([0, 0], [0, 0], [False, False], [False, False], k=2)
    se, sp = sensitivity_specificity(conf)
    assert se is None
    assert sp == 1.0


def test_confusion_merge():
    a = ConfusionCounts.tally([0], [0], [True], [True], k=2)
    b = ConfusionCounts.tally([1], [0], [False], [True], k=2)
    both = a + b
    assert both.n == 2
    assert both.tp == 1 and both.fp == 1


# ---- roc / auc ---------------------------------------------------------------


def test_perfect_separation_auc_one():
    assert auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == pytest.approx(1.0)


def test_reversed_separation_auc_zero():
    assert auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]) == pytest.approx(0.0)


def test_all_tied_scores_auc_half():
    assert auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == pytest.approx(0.5)


def test_roc_ties_share_one_point():
    curve = roc_curve([0.7, 0.7, 0.3], [1, 0, 0])
    # three distinct sweep positions: origin, the tied pair, the last point
    assert len(curve.fpr) == 3
    assert curve.fpr[-1] == 1.0 and curve.tpr[-1] == 1.0


def test_roc_rejects_single_class():
    with pytest.raises(ValueError):
        roc_curve([0.5, 0.6], [1, 1])


def test_auc_hand_example():
    scores = [0.9, 0.7, 0.7, 0.3, 0.1]
    labels = [1, 1, 0, 0, 0]
    assert auc(scores, labels) == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.floats(0, 1, allow_nan=False, width=16),
            st.integers(min_value=0, max_value=1),
        ),
        min_size=2,
        max_size=60,
    )
)
def test_auc_equals_pairwise_oracle(pairs):
    scores = [s for s, _ in pairs]
    labels = [y for _, y in pairs]
    if len(set(labels)) < 2:
        return
    assert auc(scores, labels) == pytest.approx(
        pairwise_auc(scores, labels), abs=1e-9
    )


# ---- uncertainty buckets ---------------------------------------------------------


def test_default_bucket_edges_k3():
    edges = default_bucket_edges(3)
    assert edges[0] == 0.0
    assert edges[-1] == pytest.approx(math.log(3))
    assert edges == (0.0, 0.25, 0.5, 0.75, pytest.approx(math.log(3)))


def test_default_bucket_edges_k2_drops_out_of_range():
    edges = default_bucket_edges(2)
    # ln 2 = 0.693: the 0.75 inner edge falls outside and is dropped
    assert edges[-1] == pytest.approx(math.log(2))
    assert all(e < math.log(2) for e in edges[1:-1])


def test_bucket_accuracy_counts_and_rates():
    edges = (0.0, 0.5, 1.0)
    u = [0.1, 0.2, 0.7, 0.9, 1.0]
    correct = [True, False, True, True, False]
    rows = bucket_accuracy(u, correct, edges)
    assert [r.count for r in rows] == [2, 3]
    assert rows[0].accuracy == pytest.approx(0.5)
    assert rows[1].accuracy == pytest.approx(2 / 3)
    assert rows[0].lo == 0.0 and rows[0].hi == 0.5


def test_bucket_accuracy_empty_bucket_reports_none():
    rows = bucket_accuracy([0.9], [True], (0.0, 0.5, 1.0))
    assert rows[0].count == 0 and rows[0].accuracy is None
    assert rows[1].count == 1 and rows[1].accuracy == 1.0


def test_bucket_intervals_half_open_top_closed():
    edges = (0.0, 0.5, 1.0)
    rows = bucket_accuracy([0.5, 1.0, 0.0], [True, True, True], edges)
    # 0.5 belongs to the upper bucket (half-open), 1.0 to the top (closed)
    assert rows[0].count == 1
    assert rows[1].count == 2


def test_every_sample_lands_in_exactly_one_bucket():
    rng = np.random.default_rng(3)
    edges = default_bucket_edges(3)
    u = rng.uniform(0.0, math.log(3), size=500)
    rows = bucket_accuracy(u, np.ones(500, dtype=bool), edges)
    assert sum(r.count for r in rows) == 500


def test_severity_uncertainty_table_shape():
    u = [0.0, 0.2, 0.9, 1.0]
    classes = [0, 0, 1, 2]
    rows = severity_uncertainty_table(classes, u, k=3, edges=(0.0, 0.5, 1.1))
    assert len(rows) == 3 * 2
    class0 = [r for r in rows if r["class"] == 0]
    assert sum(r["count"] for r in class0) == 2
    assert class0[0]["class_mean_u"] == pytest.approx(0.1)
