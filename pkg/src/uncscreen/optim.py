"""Adam optimizer with a reduce-on-plateau learning-rate schedule."""

from __future__ import annotations

import numpy as np

from .nn import ParamStore

__all__ = ["Adam"]


class Adam:
    """Standard Adam update plus adaptive decay of the learning rate.

    The learning rate is multiplied by ``decay_factor`` whenever the
    monitored validation loss fails to improve by ``decay_min_delta``
    for ``decay_patience`` consecutive epochs.
    """

    def __init__(
        self,
        params: ParamStore,
        lr: float = 0.01,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        decay_factor: float = 0.5,
        decay_patience: int = 5,
        decay_min_delta: float = 1e-4,
    ):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.decay_factor = decay_factor
        self.decay_patience = decay_patience
        self.decay_min_delta = decay_min_delta
        self.step_count = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.tensors.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.tensors.items()}
        self._best = float("inf")
        self._bad_epochs = 0

    def step(self):
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.step_count
        bias2 = 1.0 - b2**self.step_count
        for name, t in self.params.tensors.items():
            if t.grad is None:
                raise ValueError(f"missing gradient for parameter {name!r}")
            g = t.grad
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * (g * g)
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            t.data = t.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def observe_validation(self, loss: float) -> bool:
        """Track the plateau monitor; returns True when the lr was decayed."""
        if loss < self._best - self.decay_min_delta:
            self._best = loss
            self._bad_epochs = 0
            return False
        self._bad_epochs += 1
        if self._bad_epochs >= self.decay_patience:
            self.lr *= self.decay_factor
            self._bad_epochs = 0
            return True
        return False
