"""JSON-lines dataset round trips and validation."""

import json

import numpy as np
import pytest

from uncscreen.dataset import (
    SampleRecord,
    Split,
    read_dataset,
    sidecar_path,
    write_dataset,
)
from uncscreen.errors import DataError
from uncscreen.labeling import GraderVotes


def make_record(i, votes=(0, 0, 0), true_class=0, split=Split.TRAIN, k=3):
    rng = np.random.default_rng(i)
    return SampleRecord(
        sample_id=f"s{i:04d}",
        features=rng.normal(size=5),
        true_class=true_class,
        votes=GraderVotes(f"s{i:04d}", votes, k),
        split=split,
    )


def small_dataset():
    return [
        make_record(0, (0, 0, 0)),
        make_record(1, (1, 1, 2, 1), true_class=1, split=Split.VAL),
        make_record(2, (2, 0, 2, 2), true_class=2, split=Split.TEST),
    ]


def test_round_trip_is_lossless(tmp_path):
    path = tmp_path / "d.jsonl"
    original = [make_record(i, (i % 3, i % 3, i % 3), true_class=i % 3) for i in range(100)]
    write_dataset(original, path)
    loaded = read_dataset(path, k=3)
    assert len(loaded) == 100
    for a, b in zip(original, loaded):
        assert a.sample_id == b.sample_id
        assert a.true_class == b.true_class
        assert a.votes.votes == b.votes.votes
        assert a.split is b.split
        np.testing.assert_array_equal(a.features, b.features)
        assert a.u == b.u


def test_sidecar_metadata(tmp_path):
    path = tmp_path / "d.jsonl"
    write_dataset(small_dataset(), path, meta={"n": 3, "seed": 0})
    side = sidecar_path(path)
    assert side.name == "d.meta.json"
    assert json.loads(side.read_text())["n"] == 3


def test_derived_fields_are_stored(tmp_path):
    path = tmp_path / "d.jsonl"
    write_dataset(small_dataset(), path)
    first = json.loads(path.read_text().splitlines()[0])
    assert first["empirical"] == [1.0, 0.0, 0.0]
    assert first["u"] == 0.0


def test_vote_out_of_range_names_sample(tmp_path):
    path = tmp_path / "d.jsonl"
    write_dataset(small_dataset(), path)
    lines = path.read_text().splitlines()
    obj = json.loads(lines[1])
    obj["votes"] = [0, 1, 7]
    del obj["empirical"], obj["u"]
    lines[1] = json.dumps(obj)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match=r"s0001"):
        read_dataset(path, k=3)


def test_stored_uncertainty_mismatch_rejected(tmp_path):
    path = tmp_path / "d.jsonl"
    write_dataset(small_dataset(), path)
    lines = path.read_text().splitlines()
    obj = json.loads(lines[0])
    obj["u"] = obj["u"] + 1e-6
    lines[0] = json.dumps(obj)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match="disagrees"):
        read_dataset(path, k=3)


def test_stored_empirical_mismatch_rejected(tmp_path):
    path = tmp_path / "d.jsonl"
    write_dataset(small_dataset(), path)
    lines = path.read_text().splitlines()
    obj = json.loads(lines[2])
    obj["empirical"] = [1.0, 0.0, 0.0]
    lines[2] = json.dumps(obj)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match="empirical"):
        read_dataset(path, k=3)


def test_malformed_json_reports_line_number(tmp_path):
    path = tmp_path / "d.jsonl"
    write_dataset(small_dataset(), path)
    text = path.read_text().splitlines()
    text[1] = "{not json"
    path.write_text("\n".join(text) + "\n")
    with pytest.raises(DataError, match="line 2"):
        read_dataset(path, k=3)


def test_missing_field_reports_line_number(tmp_path):
    path = tmp_path / "d.jsonl"
    obj = {"id": "a", "features": [0.0, 1.0], "true_class": 0, "votes": [0, 0, 0]}
    path.write_text(json.dumps(obj) + "\n")
    with pytest.raises(DataError, match="split"):
        read_dataset(path, k=3)


def test_duplicate_ids_rejected(tmp_path):
    path = tmp_path / "d.jsonl"
    records = small_dataset()
    write_dataset(records, path)
    line = path.read_text().splitlines()[0]
    path.write_text(line + "\n" + line + "\n")
    with pytest.raises(DataError, match="duplicate"):
        read_dataset(path, k=3)


def test_unknown_split_rejected(tmp_path):
    path = tmp_path / "d.jsonl"
    write_dataset(small_dataset(), path)
    lines = path.read_text().splitlines()
    obj = json.loads(lines[0])
    obj["split"] = "holdout"
    lines[0] = json.dumps(obj)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match="holdout"):
        read_dataset(path, k=3)


def test_inconsistent_feature_widths_rejected(tmp_path):
    path = tmp_path / "d.jsonl"
    write_dataset(small_dataset(), path)
    lines = path.read_text().splitlines()
    obj = json.loads(lines[1])
    obj["features"] = obj["features"] + [0.0]
    lines[1] = json.dumps(obj)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match="widths"):
        read_dataset(path, k=3)


def test_missing_file_is_a_data_error(tmp_path):
    with pytest.raises(DataError, match="not found"):
        read_dataset(tmp_path / "nope.jsonl")


def test_empty_dataset_rejected_both_ways(tmp_path):
    path = tmp_path / "d.jsonl"
    with pytest.raises(DataError):
        write_dataset([], path)
    path.write_text("\n")
    with pytest.raises(DataError, match="empty"):
        read_dataset(path)


def test_k_inference_from_votes(tmp_path):
    path = tmp_path / "d.jsonl"
    write_dataset(small_dataset(), path)
    loaded = read_dataset(path)  # no k given
    assert all(r.votes.k == 3 for r in loaded)


def test_record_properties_consistent():
    rec = make_record(7, (1, 1, 2, 1), true_class=1)
    np.testing.assert_allclose(rec.empirical, [0.0, 0.75, 0.25])
    assert rec.majority_class == 1
    np.testing.assert_array_equal(rec.majority_one_hot, [0.0, 1.0, 0.0])
    expected_u = -(0.75 * np.log(0.75) + 0.25 * np.log(0.25))
    assert rec.u == pytest.approx(expected_u, abs=1e-12)


def test_write_is_atomic_no_tmp_left_behind(tmp_path):
    path = tmp_path / "d.jsonl"
    write_dataset(small_dataset(), path, meta={"x": 1})
    leftovers = [p.name for p in tmp_path.iterdir() if p.name.endswith(".tmp")]
    assert leftovers == []
