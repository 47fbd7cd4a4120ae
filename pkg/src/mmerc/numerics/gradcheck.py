from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward


def numeric_grad(fn: Callable[[], Tensor], t: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``fn()`` with respect to ``t.data``."""
    out = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    g = out.reshape(-1)
    for k in range(flat.size):
        old = flat[k]
        flat[k] = old + h
        fp = float(fn().data)
        flat[k] = old - h
        fm = float(fn().data)
        flat[k] = old
        g[k] = (fp - fm) / (2.0 * h)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """||a - n|| / max(||a||, ||n||), or the absolute gap when both are ~0."""
    diff = float(np.linalg.norm(analytic - numeric))
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    if scale < floor:
        return diff
    return diff / scale


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor],
                    h: float = 1e-5) -> list[float]:
    """Relative error of backward() against finite differences, one entry per input."""
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    backward(fn())
    errors = []
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        errors.append(relative_error(analytic, numeric_grad(fn, t, h)))
    return errors
