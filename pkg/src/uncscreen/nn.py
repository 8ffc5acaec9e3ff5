"""Small MLP backbones shared by the three screening streams.

Every stream uses the same shape of network: a stack of rectified hidden
layers followed by a linear head.  Classifier heads apply a row softmax;
the uncertainty regressor keeps the raw linear output.  The activation of
the last hidden layer is exposed as the per-sample feature vector.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor

__all__ = [
    "BackboneSpec",
    "ParamStore",
    "forward",
    "init_params",
    "load_weights",
    "save_weights",
]

WEIGHTS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class BackboneSpec:
    """Layer layout of one stream: input -> rectified hiddens -> head."""

    input_width: int
    hidden: tuple[int, ...] = (64, 32)
    output_width: int = 3
    head: str = "softmax"  # "softmax" for classifiers, "identity" for regression

    def __post_init__(self):
        if self.input_width < 1 or self.output_width < 1:
            raise ValueError("layer widths must be positive")
        if not self.hidden or any(w < 1 for w in self.hidden):
            raise ValueError("need at least one positive hidden width")
        if self.head not in ("softmax", "identity"):
            raise ValueError(f"unknown head {self.head!r}")
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))

    @property
    def feature_width(self) -> int:
        return self.hidden[-1]

    def layer_sizes(self) -> list[tuple[int, int]]:
        widths = [self.input_width, *self.hidden, self.output_width]
        return list(zip(widths[:-1], widths[1:]))

    def to_dict(self) -> dict:
        return {
            "input_width": self.input_width,
            "hidden": list(self.hidden),
            "output_width": self.output_width,
            "head": self.head,
        }

    @staticmethod
    def from_dict(d: dict) -> "BackboneSpec":
        return BackboneSpec(
            input_width=int(d["input_width"]),
            hidden=tuple(int(w) for w in d["hidden"]),
            output_width=int(d["output_width"]),
            head=str(d["head"]),
        )


class ParamStore:
    """Named map of trainable tensors for one stream."""

    def __init__(self, tensors: dict[str, Tensor], rng_seed: int):
        self.tensors = dict(tensors)
        self.rng_seed = int(rng_seed)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def zero_grad(self):
        for t in self.tensors.values():
            t.zero_grad()

    def clone(self) -> "ParamStore":
        copies = {}
        for name, t in self.tensors.items():
            c = Tensor(t.data.copy(), requires_grad=t.requires_grad)
            copies[name] = c
        return ParamStore(copies, self.rng_seed)

    def copy_data_from(self, other: "ParamStore"):
        if set(self.tensors) != set(other.tensors):
            raise ValueError("parameter stores have different layouts")
        for name, t in self.tensors.items():
            src = other.tensors[name].data
            if src.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {name!r}")
            t.data = src.copy()


def init_params(spec: BackboneSpec, seed: int) -> ParamStore:
    """Uniform [-s, s] weights with s = sqrt(6 / (fan_in + fan_out)), zero biases."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, Tensor] = {}
    for i, (fan_in, fan_out) in enumerate(spec.layer_sizes()):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-s, s, size=(fan_in, fan_out))
        tensors[f"layer{i}.w"] = Tensor(w, requires_grad=True)
        tensors[f"layer{i}.b"] = Tensor(np.zeros(fan_out), requires_grad=True)
    return ParamStore(tensors, seed)


def forward(spec: BackboneSpec, params: ParamStore, batch) -> tuple[Tensor, Tensor]:
    """Run the backbone; returns (output, features).

    Output rows are softmax probabilities for classifier heads or raw linear
    values for the identity head.  Features are the last hidden activation.
    """
    x = as_tensor(batch)
    if x.data.ndim != 2 or x.data.shape[1] != spec.input_width:
        raise ValueError(
            f"batch shape {x.data.shape} does not match input width "
            f"{spec.input_width}"
        )
    n_layers = len(spec.hidden)
    for i in range(n_layers):
        x = (x @ params[f"layer{i}.w"] + params[f"layer{i}.b"]).relu()
    features = x
    logits = x @ params[f"layer{n_layers}.w"] + params[f"layer{n_layers}.b"]
    out = logits.softmax() if spec.head == "softmax" else logits
    return out, features


def save_weights(path: str, spec: BackboneSpec, params: ParamStore):
    """Versioned JSON weight file; decimal round trip is bit-exact."""
    doc = {
        "format_version": WEIGHTS_FORMAT_VERSION,
        "backbone": spec.to_dict(),
        "rng_seed": params.rng_seed,
        "params": {
            name: {
                "shape": list(t.data.shape),
                "data": t.data.reshape(-1).tolist(),
            }
            for name, t in params.tensors.items()
        },
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def load_weights(path: str) -> tuple[BackboneSpec, ParamStore]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != WEIGHTS_FORMAT_VERSION:
        raise ValueError(f"unsupported weight format version {version!r}")
    spec = BackboneSpec.from_dict(doc["backbone"])
    tensors = {}
    for name, entry in doc["params"].items():
        data = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        tensors[name] = Tensor(data, requires_grad=True)
    return spec, ParamStore(tensors, int(doc["rng_seed"]))
