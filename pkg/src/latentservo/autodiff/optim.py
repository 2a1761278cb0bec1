"""Parameter update rules: adaptive-moment (Adam) and plain SGD.

Updates are in-place on the parameter tensors and fully deterministic:
identical parameters, gradients, and state produce bit-identical results.
"""

from __future__ import annotations

from typing import Dict, Mapping

import numpy as np

from .tensor import ShapeError, Tensor


class Adam:
    """Adaptive-moment estimation with bias correction.

    Keeps per-parameter first/second moment accumulators keyed by
    parameter name; accumulators always match their parameter's shape.
    """

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray]) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in params.items():
            g = np.asarray(grads[name], dtype=p.data.dtype)
            if g.shape != p.data.shape:
                raise ShapeError(
                    f"optimizer: gradient shape {g.shape} != parameter "
                    f"'{name}' shape {p.data.shape}")
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class SGD:
    """Plain gradient descent; kept around for gradient-check simplicity."""

    def __init__(self, lr: float = 1e-2):
        self.lr = lr
        self.step_count = 0

    def step(self, params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray]) -> None:
        self.step_count += 1
        for name, p in params.items():
            g = np.asarray(grads[name], dtype=p.data.dtype)
            if g.shape != p.data.shape:
                raise ShapeError(
                    f"optimizer: gradient shape {g.shape} != parameter "
                    f"'{name}' shape {p.data.shape}")
            p.data -= self.lr * g
