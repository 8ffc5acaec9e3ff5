"""Report assembly: group scoring, CSV artifacts, figures."""

import csv
import math

import numpy as np
import pytest

from uncscreen.dataset import SampleRecord, Split
from uncscreen.errors import DataError
from uncscreen.labeling import GraderVotes
from uncscreen.losses import Hyperparams
from uncscreen.metrics import Group
from uncscreen.nn import BackboneSpec, init_params
from uncscreen.report import (
    EvalReport,
    ablation_rows,
    evaluate_group,
    save_ablation_figure,
    save_bucket_figure,
    save_roc_figure,
    save_severity_figure,
    write_ablation_csv,
    write_buckets_csv,
    write_report_csv,
    write_roc_csv,
    write_severity_csv,
)
from uncscreen.streams import (
    AblationLevel,
    Route,
    ScreeningDecision,
    StreamBundle,
    default_referable_map,
)

K = 3
DIM = 4


def make_bundle(u_threshold=0.25):
    cls_spec = BackboneSpec(DIM, (4,), K, head="softmax")
    reg_spec = BackboneSpec(DIM, (4,), 1, head="identity")
    return StreamBundle(
        k=K,
        classifier_spec=cls_spec,
        regressor_spec=reg_spec,
        us_params=init_params(reg_spec, 0),
        sc_params=init_params(cls_spec, 1),
        hc_params=init_params(cls_spec, 2),
        u_threshold_nats=u_threshold,
        hyperparams=Hyperparams(),
        referable_map=default_referable_map(K),
    )


def record(i, votes, true_class):
    return SampleRecord(
        sample_id=f"r{i:03d}",
        features=np.zeros(DIM),
        true_class=true_class,
        votes=GraderVotes(f"r{i:03d}", votes, K),
        split=Split.TEST,
    )


def decision(pred, referable, probs, u=0.0):
    probs = np.asarray(probs, dtype=np.float64)
    hard = u > 0.25
    return ScreeningDecision(
        route=Route.HARD if hard else Route.SIMPLE,
        predicted_class=pred,
        referable=referable,
        u_pred=u,
        threshold_used=0.7 if hard else 0.5,
        class_probs=probs,
    )


def mixed_eval_inputs():
    """Six simple (u=0) and four hard (u>0.25) cases with varied outcomes."""
    records, decisions = [], []
    # simple: unanimous votes, all predicted correctly except one
    simple_truth = [0, 0, 1, 1, 2, 2]
    simple_pred = [0, 0, 1, 2, 2, 2]
    for i, (t, p) in enumerate(zip(simple_truth, simple_pred)):
        records.append(record(i, (t, t, t), t))
        probs = np.full(K, 0.05)
        probs[p] = 0.9
        decisions.append(decision(p, p != 0, probs))
    # hard: 2-1 vote splits, half predicted correctly
    hard_truth = [0, 1, 2, 0]
    hard_pred = [0, 1, 0, 1]
    for j, (t, p) in enumerate(zip(hard_truth, hard_pred)):
        votes = (t, t, (t + 1) % K)
        probs = np.full(K, 0.15)
        probs[p] = 0.7
        records.append(record(10 + j, votes, t))
        decisions.append(decision(p, p != 0, probs, u=0.64))
    return records, decisions


# ---- evaluate_group ---------------------------------------------------------


def test_whole_set_report_counts_everything():
    records, decisions = mixed_eval_inputs()
    rep = evaluate_group(records, decisions, make_bundle(), Group.WHOLE_SET)
    assert rep.group is Group.WHOLE_SET
    assert rep.n == 10
    correct = 5 + 2  # simple had one miss, hard had two
    assert rep.accuracy == pytest.approx(correct / 10)
    assert rep.f1.shape == (K,)
    assert rep.se is not None and rep.sp is not None
    assert rep.auc is not None and 0.0 <= rep.auc <= 1.0
    assert rep.roc_fpr is not None and rep.roc_tpr is not None


def test_hard_only_report_filters_by_label_uncertainty():
    records, decisions = mixed_eval_inputs()
    rep = evaluate_group(records, decisions, make_bundle(), Group.HARD_ONLY)
    assert rep.n == 4  # only the 2-1 splits exceed the 0.25 nats threshold
    assert rep.accuracy == pytest.approx(0.5)


def test_group_filter_uses_record_uncertainty_not_prediction():
    records, decisions = mixed_eval_inputs()
    # claim absurd u_pred on a simple case; the filter must ignore it
    probs = decisions[0].class_probs
    decisions[0] = decision(0, False, probs, u=1.0)
    records2 = list(records)
    rep = evaluate_group(records2, decisions, make_bundle(), Group.HARD_ONLY)
    assert rep.n == 4


def test_single_class_truth_disables_auc():
    records = [record(i, (1, 1, 1), 1) for i in range(4)]
    decisions = [decision(1, True, [0.1, 0.8, 0.1]) for _ in range(4)]
    rep = evaluate_group(records, decisions, make_bundle(), Group.WHOLE_SET)
    assert rep.auc is None
    assert rep.roc_fpr is None and rep.roc_tpr is None
    assert rep.sp is None  # no non-referable truth at all


def test_evaluate_group_input_validation():
    records, decisions = mixed_eval_inputs()
    with pytest.raises(ValueError):
        evaluate_group(records[:-1], decisions, make_bundle(), Group.WHOLE_SET)
    with pytest.raises(DataError):
        evaluate_group([], [], make_bundle(), Group.WHOLE_SET)
    # nothing above the threshold -> empty hard group
    simple_only = records[:6], decisions[:6]
    with pytest.raises(DataError):
        evaluate_group(*simple_only, make_bundle(), Group.HARD_ONLY)


def test_referable_score_is_one_minus_unlikely_mass():
    # perfect separation of referable truth by 1 - p(class 0) gives AUC 1
    records = [record(0, (0, 0, 0), 0), record(1, (1, 1, 1), 1)]
    decisions = [
        decision(0, False, [0.9, 0.05, 0.05]),
        decision(1, True, [0.2, 0.7, 0.1]),
    ]
    rep = evaluate_group(records, decisions, make_bundle(), Group.WHOLE_SET)
    assert rep.auc == pytest.approx(1.0)


# ---- CSV writers ---------------------------------------------------------


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.reader(fh))


def two_group_reports():
    records, decisions = mixed_eval_inputs()
    bundle = make_bundle()
    return [
        evaluate_group(records, decisions, bundle, Group.WHOLE_SET),
        evaluate_group(records, decisions, bundle, Group.HARD_ONLY),
    ]


def test_report_csv_layout(tmp_path):
    path = tmp_path / "report.csv"
    write_report_csv(two_group_reports(), path)
    rows = read_csv(path)
    assert rows[0] == [
        "group", "n", "accuracy", "se", "sp", "auc",
        "f1_class0", "f1_class1", "f1_class2",
    ]
    assert [row[0] for row in rows[1:]] == ["whole", "hard"]
    assert rows[1][1] == "10" and rows[2][1] == "4"
    # 6-decimal fixed-point floats
    assert rows[1][2] == "0.700000"
    for cell in rows[1][2:]:
        assert cell == "NA" or len(cell.split(".")[1]) == 6


def test_report_csv_writes_na_for_undefined_metrics(tmp_path):
    records = [record(i, (1, 1, 1), 1) for i in range(3)]
    decisions = [decision(1, True, [0.2, 0.7, 0.1]) for _ in range(3)]
    rep = evaluate_group(records, decisions, make_bundle(), Group.WHOLE_SET)
    path = tmp_path / "report.csv"
    write_report_csv([rep], path)
    rows = read_csv(path)
    header, row = rows[0], rows[1]
    assert row[header.index("sp")] == "NA"
    assert row[header.index("auc")] == "NA"


def test_buckets_csv_rows(tmp_path):
    reports = two_group_reports()
    path = tmp_path / "buckets.csv"
    write_buckets_csv(reports, path)
    rows = read_csv(path)
    assert rows[0] == ["group", "bucket_lo", "bucket_hi", "count", "accuracy"]
    n_buckets = len(reports[0].buckets)
    assert len(rows) == 1 + n_buckets + len(reports[1].buckets)
    whole_rows = [row for row in rows[1:] if row[0] == "whole"]
    assert sum(int(row[3]) for row in whole_rows) == 10
    # empty buckets carry NA accuracy rather than a fake zero
    empties = [row for row in rows[1:] if row[3] == "0"]
    assert all(row[4] == "NA" for row in empties)


def test_severity_csv_rows(tmp_path):
    reports = two_group_reports()
    path = tmp_path / "severity_uncertainty.csv"
    write_severity_csv(reports, path)
    rows = read_csv(path)
    assert rows[0] == [
        "group", "class", "bucket_lo", "bucket_hi", "count", "class_mean_u"
    ]
    whole = [row for row in rows[1:] if row[0] == "whole"]
    # every class appears once per bucket
    classes = {row[1] for row in whole}
    assert classes == {"0", "1", "2"}
    assert sum(int(row[4]) for row in whole) == 10


def test_roc_csv_skips_groups_without_curve(tmp_path):
    records = [record(i, (1, 1, 1), 1) for i in range(3)]
    decisions = [decision(1, True, [0.2, 0.7, 0.1]) for _ in range(3)]
    degenerate = evaluate_group(records, decisions, make_bundle(), Group.WHOLE_SET)
    path = tmp_path / "roc.csv"
    write_roc_csv([degenerate], path)
    assert read_csv(path) == [["group", "fpr", "tpr"]]

    write_roc_csv(two_group_reports(), path)
    rows = read_csv(path)
    assert len(rows) > 1
    for row in rows[1:]:
        assert 0.0 <= float(row[1]) <= 1.0
        assert 0.0 <= float(row[2]) <= 1.0


# ---- ablation table ---------------------------------------------------------


def fake_report(group, accuracy, n=20):
    return EvalReport(
        group=group,
        n=n,
        conf=None,
        f1=np.array([accuracy] * K),
        accuracy=accuracy,
        se=None,
        sp=None,
        auc=None,
        buckets=[],
        severity=[],
        roc_fpr=None,
        roc_tpr=None,
    )


def test_ablation_rows_order_and_shape(tmp_path):
    levels = tuple(AblationLevel)
    reports = {}
    for gi, group in enumerate((Group.WHOLE_SET, Group.HARD_ONLY)):
        for li, level in enumerate(levels):
            reports[(group, level)] = fake_report(group, 0.5 + 0.1 * li - 0.2 * gi)
    rows = ablation_rows(levels, reports)
    assert len(rows) == 8
    assert [row[0] for row in rows] == ["whole"] * 4 + ["hard"] * 4
    assert [row[1] for row in rows] == ["m1", "m2", "m3", "m4"] * 2
    assert all(len(row) == 3 + K + 1 for row in rows)

    path = tmp_path / "ablation.csv"
    write_ablation_csv(rows, K, path)
    parsed = read_csv(path)
    assert parsed[0] == [
        "group", "variant", "n",
        "f1_class0", "f1_class1", "f1_class2", "overall_accuracy",
    ]
    assert parsed[1][:2] == ["whole", "m1"]
    assert parsed[5][:2] == ["hard", "m1"]
    assert parsed[1][-1] == "0.500000"


# ---- figures ---------------------------------------------------------


def test_figures_render_to_png(tmp_path):
    reports = two_group_reports()
    paths = {
        "buckets": tmp_path / "buckets.png",
        "severity": tmp_path / "severity.png",
        "roc": tmp_path / "roc.png",
    }
    save_bucket_figure(reports, paths["buckets"])
    save_severity_figure(reports, paths["severity"])
    save_roc_figure(reports, paths["roc"])
    for path in paths.values():
        data = path.read_bytes()
        assert data[:8] == b"\x89PNG\r\n\x1a\n"
        assert len(data) > 1000


def test_figures_are_byte_deterministic(tmp_path):
    reports = two_group_reports()
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    save_roc_figure(reports, a)
    save_roc_figure(reports, b)
    assert a.read_bytes() == b.read_bytes()


def test_ablation_figure_renders(tmp_path):
    levels = tuple(AblationLevel)
    reports = {
        (group, level): fake_report(group, 0.6)
        for group in (Group.WHOLE_SET, Group.HARD_ONLY)
        for level in levels
    }
    rows = ablation_rows(levels, reports)
    path = tmp_path / "ablation.png"
    save_ablation_figure(rows, path)
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_roc_figure_handles_degenerate_reports(tmp_path):
    records = [record(i, (1, 1, 1), 1) for i in range(3)]
    decisions = [decision(1, True, [0.2, 0.7, 0.1]) for _ in range(3)]
    rep = evaluate_group(records, decisions, make_bundle(), Group.WHOLE_SET)
    path = tmp_path / "roc.png"
    save_roc_figure([rep], path)  # no curve to draw, still a valid figure
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
