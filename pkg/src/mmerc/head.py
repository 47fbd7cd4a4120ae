from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from . import numerics as nx
from .numerics import ShapeError, Tensor
from .params import ParamStore


def init_head(store: ParamStore, prefix: str, d_in: int, d_hidden: int, n_classes: int) -> None:
    store.glorot(f"{prefix}.Phi0", (d_in, d_hidden))
    store.zeros(f"{prefix}.b0", (d_hidden,))
    store.glorot(f"{prefix}.Phi1", (d_hidden, n_classes))
    store.zeros(f"{prefix}.b1", (n_classes,))


def fuse(parts: Sequence[Tensor]) -> Tensor:
    """Feature-wise concatenation of per-utterance blocks, in the order given.

    The model passes ``[G^a, G^v, G^l, Z_av, Z_vl, Z_la]`` (absent blocks skipped).
    """
    if not parts:
        raise ShapeError("nothing to fuse: every representation block is disabled")
    n = parts[0].shape[0]
    if any(p.shape[0] != n for p in parts):
        raise ShapeError(f"fusion inputs disagree on row count: {[p.shape for p in parts]}")
    return parts[0] if len(parts) == 1 else nx.concat(parts, axis=1)


def logits(h: Tensor, params: Mapping[str, Tensor], dropout: float = 0.0,
           training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    if h.shape[1] != params["Phi0"].shape[0]:
        raise ShapeError(f"classifier expects width {params['Phi0'].shape[0]}, got {h.shape[1]}")
    v = nx.relu(h @ params["Phi0"] + params["b0"])
    v = nx.dropout(v, dropout, training, rng)
    return v @ params["Phi1"] + params["b1"]


def predict(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise class probabilities and argmax labels (ties go to the lowest index)."""
    p = nx.softmax(Tensor(z), axis=1).data
    return p, np.argmax(z, axis=1)


def classify(h: Tensor, params: Mapping[str, Tensor]) -> tuple[np.ndarray, np.ndarray]:
    return predict(logits(h, params).data)


def objective(p: np.ndarray, labels) -> float:
    """Mean negative log-likelihood of ``labels`` under probability rows ``p``."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= p.shape[1]):
        raise IndexError(f"label out of range [0, {p.shape[1]})")
    picked = p[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(picked)))
