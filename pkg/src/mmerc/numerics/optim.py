from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .tensor import ShapeError, Tensor


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray | None],
              state: AdamState, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8,
              scratch: dict[str, np.ndarray] | None = None) -> None:
    """One bias-corrected Adam update, in place on ``params[*].data``.

    A missing gradient is treated as zero so moments still decay for
    parameters that did not participate in the step. ``scratch`` caches one
    work buffer per parameter between calls.
    """
    if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
        raise ValueError(f"Adam betas must lie in [0, 1), got {beta1}, {beta2}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is not None and g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        # in place: these buffers reach tens of millions of entries
        m *= beta1
        v *= beta2
        tmp = scratch.get(name) if scratch is not None else None
        if tmp is None:
            tmp = np.empty_like(v)
            if scratch is not None:
                scratch[name] = tmp
        if g is not None:
            np.multiply(g, 1.0 - beta1, out=tmp)
            m += tmp
            np.multiply(g, g, out=tmp)
            tmp *= 1.0 - beta2
            v += tmp
        # p -= (lr / bc1) * m / (sqrt(v / bc2) + eps)
        np.sqrt(v, out=tmp)
        tmp *= 1.0 / np.sqrt(bc2)
        tmp += eps
        np.divide(m, tmp, out=tmp)
        tmp *= lr / bc1
        p.data -= tmp


class Adam:
    def __init__(self, params: Mapping[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState()
        self._scratch: dict[str, np.ndarray] = {}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        grads = {k: p.grad for k, p in self.params.items()}
        adam_step(self.params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps,
                  self._scratch)
