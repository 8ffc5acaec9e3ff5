"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps a float64 ndarray and records the op that produced it as a
closure on the tape.  Calling backward() on a scalar loss topologically
sorts the graph and accumulates gradients into every node, so parameters
(leaves with requires_grad=True) end up with d(loss)/d(param) in .grad.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Tensor", "as_tensor"]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # reduce a broadcast gradient back to the original operand shape
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_used")

    # keep numpy from hijacking `ndarray <op> Tensor`: returning
    # NotImplemented makes Python fall back to our reflected operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._used = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # ---- graph construction -------------------------------------------------

    @staticmethod
    def _op(data: np.ndarray, parents: tuple["Tensor", ...], backward) -> "Tensor":
        out = Tensor(data)
        out._parents = parents
        out._backward = backward
        out.requires_grad = any(p.requires_grad for p in parents)
        return out

    def backward(self):
        """Accumulate gradients of this scalar into all reachable nodes."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar, got shape {self.shape}")
        if self._used:
            raise RuntimeError(
                "backward() already ran on this graph; rebuild the forward pass"
            )
        self._used = True

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._backward(node.grad)):
                if g is None:
                    continue
                if parent.grad is None:
                    parent.grad = g.copy() if g is node.grad else g
                else:
                    parent.grad = parent.grad + g

    # ---- elementwise ops ----------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        return Tensor._op(
            self.data + other.data,
            (self, other),
            lambda g: (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape)),
        )

    def __radd__(self, other):
        return self + other

    def __neg__(self):
        return Tensor._op(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        other = as_tensor(other)
        return Tensor._op(
            self.data - other.data,
            (self, other),
            lambda g: (_unbroadcast(g, self.shape), _unbroadcast(-g, other.shape)),
        )

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        return Tensor._op(
            self.data * other.data,
            (self, other),
            lambda g: (
                _unbroadcast(g * other.data, self.shape),
                _unbroadcast(g * self.data, other.shape),
            ),
        )

    def __rmul__(self, other):
        return self * other

    def __truediv__(self, other):
        other = as_tensor(other)
        return Tensor._op(
            self.data / other.data,
            (self, other),
            lambda g: (
                _unbroadcast(g / other.data, self.shape),
                _unbroadcast(-g * self.data / (other.data * other.data), other.shape),
            ),
        )

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __matmul__(self, other):
        other = as_tensor(other)
        return Tensor._op(
            self.data @ other.data,
            (self, other),
            lambda g: (g @ other.data.T, self.data.T @ g),
        )

    def relu(self) -> "Tensor":
        mask = self.data > 0.0
        return Tensor._op(self.data * mask, (self,), lambda g: (g * mask,))

    def exp(self) -> "Tensor":
        out_data = np.exp(self.data)
        return Tensor._op(out_data, (self,), lambda g: (g * out_data,))

    def log(self) -> "Tensor":
        # caller guarantees positive input (see clip_min)
        return Tensor._op(np.log(self.data), (self,), lambda g: (g / self.data,))

    def sqrt(self) -> "Tensor":
        out_data = np.sqrt(self.data)
        return Tensor._op(out_data, (self,), lambda g: (g * 0.5 / out_data,))

    def pow_const(self, exponent) -> "Tensor":
        """Elementwise x ** c for a constant (array or scalar) exponent."""
        c = np.asarray(exponent, dtype=np.float64)
        out_data = self.data**c

        def backward(g):
            # d/dx x**c = c * x**(c-1); defined as 0 where c == 0, and the
            # subgradient at x == 0 is taken as 0 to avoid infinities
            safe = np.where(self.data > 0.0, self.data, 1.0)
            local = np.where(self.data > 0.0, c * safe ** (c - 1.0), 0.0)
            return (_unbroadcast(g * local, self.shape),)

        return Tensor._op(out_data, (self,), backward)

    def clip_min(self, floor: float) -> "Tensor":
        mask = self.data > floor
        return Tensor._op(np.maximum(self.data, floor), (self,), lambda g: (g * mask,))

    # ---- reductions and shape -----------------------------------------------

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is None:
                return (np.broadcast_to(g, self.shape).copy(),)
            gg = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gg, self.shape).copy(),)

        return Tensor._op(out_data, (self,), backward)

    def mean(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        return Tensor._op(
            self.data.reshape(*shape), (self,), lambda g: (g.reshape(self.shape),)
        )

    def softmax(self) -> "Tensor":
        """Row softmax of a [N, K] matrix; rows sum to 1 and are positive."""
        if self.data.ndim != 2:
            raise ValueError(f"softmax expects a 2-D input, got shape {self.shape}")
        shifted = self.data - self.data.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        s = e / e.sum(axis=1, keepdims=True)

        def backward(g):
            dot = (g * s).sum(axis=1, keepdims=True)
            return (s * (g - dot),)

        return Tensor._op(s, (self,), backward)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)
