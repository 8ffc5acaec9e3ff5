"""Dataset records and JSON-lines persistence.

One record per line: ``{"id", "features", "true_class", "votes", "split"}``
plus the derived fields ``empirical`` and ``u`` (entropy in nats).  Derived
fields are recomputed from the votes on read and verified against the
stored values to 1e-9, so a hand-edited file cannot smuggle in an
inconsistent uncertainty.  A sidecar ``<stem>.meta.json`` records the
generator settings and seeds for provenance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DataError
from .labeling import (
    GraderVotes,
    empirical_distribution,
    majority_label,
    uncertainty_score,
)

__all__ = ["SampleRecord", "Split", "read_dataset", "sidecar_path", "write_dataset"]


class Split(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass(frozen=True)
class SampleRecord:
    """One labeled sample: features, truth, panel votes, derived uncertainty."""

    sample_id: str
    features: np.ndarray
    true_class: int
    votes: GraderVotes
    split: Split

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 1 or feats.size == 0:
            raise DataError(f"{self.sample_id}: features must be a 1-D vector")
        if not np.isfinite(feats).all():
            raise DataError(f"{self.sample_id}: non-finite feature value")
        object.__setattr__(self, "features", feats)
        if not 0 <= self.true_class < self.votes.k:
            raise DataError(
                f"{self.sample_id}: true_class {self.true_class} outside [0, {self.votes.k})"
            )

    @property
    def empirical(self) -> np.ndarray:
        return empirical_distribution(self.votes).probs

    @property
    def u(self) -> float:
        """Label uncertainty in nats."""
        return uncertainty_score(empirical_distribution(self.votes)).value

    @property
    def majority_class(self) -> int:
        return majority_label(self.votes).class_index

    @property
    def majority_one_hot(self) -> np.ndarray:
        return majority_label(self.votes).one_hot


def sidecar_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".meta.json")


def write_dataset(records: list[SampleRecord], path: str | Path, meta: dict | None = None):
    """Write JSON-lines records (and optional sidecar metadata) atomically."""
    if not records:
        raise DataError("refusing to write an empty dataset")
    p = Path(path)
    lines = []
    for rec in records:
        lines.append(
            json.dumps(
                {
                    "id": rec.sample_id,
                    "features": [float(x) for x in rec.features],
                    "true_class": rec.true_class,
                    "votes": list(rec.votes.votes),
                    "split": rec.split.value,
                    "empirical": [float(x) for x in rec.empirical],
                    "u": rec.u,
                },
                sort_keys=True,
            )
        )
    tmp = p.with_name(p.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tmp.replace(p)
    if meta is not None:
        side = sidecar_path(p)
        tmp = side.with_name(side.name + ".tmp")
        tmp.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(side)


def _record_from_obj(obj: dict, lineno: int, k: int | None) -> SampleRecord:
    for field in ("id", "features", "true_class", "votes", "split"):
        if field not in obj:
            raise DataError(f"line {lineno}: missing field {field!r}")
    sample_id = str(obj["id"])
    votes = [int(v) for v in obj["votes"]]
    if k is None:
        if "empirical" in obj:
            k = len(obj["empirical"])
        else:
            k = max(int(obj["true_class"]), max(votes, default=0)) + 1
    try:
        grader_votes = GraderVotes(sample_id, tuple(votes), k)
    except ValueError as exc:
        raise DataError(f"line {lineno} ({sample_id}): {exc}") from exc
    try:
        split = Split(obj["split"])
    except ValueError as exc:
        raise DataError(
            f"line {lineno} ({sample_id}): unknown split {obj['split']!r}"
        ) from exc
    try:
        record = SampleRecord(
            sample_id=sample_id,
            features=np.asarray(obj["features"], dtype=np.float64),
            true_class=int(obj["true_class"]),
            votes=grader_votes,
            split=split,
        )
    except (TypeError, ValueError) as exc:
        raise DataError(f"line {lineno} ({sample_id}): {exc}") from exc

    # integrity: stored derived fields must match what the votes imply
    if "empirical" in obj:
        stored = np.asarray(obj["empirical"], dtype=np.float64)
        if stored.shape != record.empirical.shape or (
            np.abs(stored - record.empirical).max() > 1e-9
        ):
            raise DataError(
                f"line {lineno} ({sample_id}): stored empirical distribution "
                "disagrees with the votes"
            )
    if "u" in obj:
        if abs(float(obj["u"]) - record.u) > 1e-9:
            raise DataError(
                f"line {lineno} ({sample_id}): stored uncertainty "
                f"{obj['u']} disagrees with recomputed {record.u:.12f}"
            )
    return record


def read_dataset(path: str | Path, k: int | None = None) -> list[SampleRecord]:
    """Read and validate a JSON-lines dataset.

    ``k`` fixes the class count; when omitted it is inferred as one more
    than the largest class index seen in the file (votes or true labels).
    """
    p = Path(path)
    if not p.is_file():
        raise DataError(f"dataset file not found: {p}")
    records = []
    ids = set()
    widths = set()
    with p.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{p}: line {lineno}: malformed JSON: {exc}") from exc
            record = _record_from_obj(obj, lineno, k)
            if record.sample_id in ids:
                raise DataError(
                    f"{p}: line {lineno}: duplicate sample id {record.sample_id!r}"
                )
            ids.add(record.sample_id)
            widths.add(record.features.size)
            records.append(record)
    if not records:
        raise DataError(f"{p}: empty dataset")
    if len(widths) > 1:
        raise DataError(f"{p}: inconsistent feature widths {sorted(widths)}")
    if k is None:
        # normalize: all records share the maximal observed class count
        k_seen = max(rec.votes.k for rec in records)
        records = [
            rec
            if rec.votes.k == k_seen
            else SampleRecord(
                rec.sample_id,
                rec.features,
                rec.true_class,
                GraderVotes(rec.sample_id, rec.votes.votes, k_seen),
                rec.split,
            )
            for rec in records
        ]
    return records
