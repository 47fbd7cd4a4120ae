"""Dense float64 tensors with a per-forward reverse-mode tape."""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    pass


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple["Tensor", ...] = (),
                 _backward: Callable[[np.ndarray], None] | None = None):
        self.data = _as_array(data)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = _backward

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    # -- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a tensor is not supported")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self) -> None:
        backward(self)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor],
          backward_fn: Callable[[np.ndarray], None]) -> Tensor:
    live = tuple(p for p in parents if p.requires_grad)
    if not live:
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=live, _backward=backward_fn)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        # adopt fresh buffers; views and read-only broadcasts get copied
        owned = g.flags.owndata and g.flags.writeable and g.dtype == np.float64
        t.grad = g if owned else np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- differentiation ----------------------------------------------------

def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every tensor with ``requires_grad`` reachable from ``loss``.

    Gradients accumulate into existing ``.grad`` buffers, so callers zero
    parameters between optimisation steps.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    # intermediate grads live in a side table so leaves keep accumulating
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    handed_out: set[int] = set()
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            _accumulate(node, g)
            continue
        for parent, pg in node._backward(g):
            # an array passed to two consumers must not be adopted by both
            if id(pg) in handed_out:
                pg = pg.copy()
            handed_out.add(id(pg))
            if parent._backward is None:
                _accumulate(parent, pg)
            else:
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg


# -- elementwise --------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = a.data + b.data

    def bw(g):
        res = []
        if a.requires_grad:
            res.append((a, _unbroadcast(g, a.shape)))
        if b.requires_grad:
            res.append((b, _unbroadcast(g, b.shape)))
        return res

    return _make(out, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: [(a, -g)])


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = a.data * b.data

    def bw(g):
        res = []
        if a.requires_grad:
            res.append((a, _unbroadcast(g * b.data, a.shape)))
        if b.requires_grad:
            res.append((b, _unbroadcast(g * a.data, b.shape)))
        return res

    return _make(out, (a, b), bw)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: [(a, g * out)])


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), (a,), lambda g: [(a, g / a.data)])


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: [(a, g * mask)])


# -- shape --------------------------------------------------------------

def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    return _make(a.data.T, (a,), lambda g: [(a, g.T)])


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: [(a, g.reshape(src))])


def getitem(a: Tensor, index) -> Tensor:
    out = a.data[index]

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return [(a, full)]

    return _make(np.array(out, copy=True), (a,), bw)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [_lift(p) for p in parts]
    if not parts:
        raise ShapeError("concat of an empty list")
    nd = parts[0].ndim
    ax = axis % nd
    for p in parts[1:]:
        if p.ndim != nd or any(p.shape[d] != parts[0].shape[d] for d in range(nd) if d != ax):
            raise ShapeError(
                f"concat along axis {axis}: incompatible shapes "
                f"{[q.shape for q in parts]}")
    out = np.concatenate([p.data for p in parts], axis=ax)
    bounds = np.cumsum([0] + [p.shape[ax] for p in parts])

    def bw(g):
        res = []
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                sl = [slice(None)] * nd
                sl[ax] = slice(lo, hi)
                res.append((p, g[tuple(sl)]))
        return res

    return _make(out, parts, bw)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return [(a, np.broadcast_to(g, a.shape))]

    return _make(out, (a,), bw)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


# -- linear algebra -----------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bw(g):
        res = []
        if a.requires_grad:
            res.append((a, g @ b.data.T))
        if b.requires_grad:
            res.append((b, a.data.T @ g))
        return res

    return _make(out, (a, b), bw)


def sparse_matmul(m: sp.spmatrix, x: Tensor) -> Tensor:
    """Constant sparse matrix times a dense tensor."""
    if m.shape[1] != x.shape[0]:
        raise ShapeError(f"sparse_matmul shape mismatch: {m.shape} @ {x.shape}")
    out = np.asarray(m @ x.data)
    # m.T of a CSR matrix is a free CSC view; no conversion needed
    return _make(out, (x,), lambda g: [(x, np.asarray(m.T @ g))])


def segment_sum(x: Tensor, segments: np.ndarray, n_segments: int) -> Tensor:
    """Sum rows of ``x`` into ``n_segments`` buckets; row k goes to ``segments[k]``."""
    segments = np.asarray(segments, dtype=np.int64)
    out = np.zeros((n_segments,) + x.shape[1:])
    np.add.at(out, segments, x.data)
    return _make(out, (x,), lambda g: [(x, g[segments])])


# -- normalisers --------------------------------------------------------

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.ndim <= axis < max(x.ndim, 1):
        raise ShapeError(f"softmax axis {axis} invalid for shape {x.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return [(x, out * (g - (g * out).sum(axis=axis, keepdims=True)))]

    return _make(out, (x,), bw)


def masked_softmax(x: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over the last axis restricted to ``mask``; fully masked rows become zeros."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise ShapeError(f"mask shape {mask.shape} != scores shape {x.shape}")
    z = np.where(mask, x.data, -np.inf)
    row_max = z.max(axis=-1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    e = np.where(mask, np.exp(np.where(mask, x.data, 0.0) - row_max), 0.0)
    denom = e.sum(axis=-1, keepdims=True)
    out = e / np.where(denom > 0, denom, 1.0)

    def bw(g):
        return [(x, out * (g - (g * out).sum(axis=-1, keepdims=True)))]

    return _make(out, (x,), bw)


def segment_softmax(scores: Tensor, segments: np.ndarray, n_segments: int) -> Tensor:
    """Softmax of a score vector within each segment (edges grouped by target node)."""
    segments = np.asarray(segments, dtype=np.int64)
    s = scores.data
    seg_max = np.full(n_segments, -np.inf)
    np.maximum.at(seg_max, segments, s)
    e = np.exp(s - seg_max[segments])
    denom = np.zeros(n_segments)
    np.add.at(denom, segments, e)
    out = e / denom[segments]

    def bw(g):
        dot = np.zeros(n_segments)
        np.add.at(dot, segments, g * out)
        return [(scores, out * (g - dot[segments]))]

    return _make(out, (scores,), bw)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(
            f"layer_norm width mismatch: input {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        res = []
        if x.requires_grad:
            gh = g * gamma.data
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
            res.append((x, gx))
        lead = tuple(range(g.ndim - 1))
        if gamma.requires_grad:
            res.append((gamma, (g * xhat).sum(axis=lead)))
        if beta.requires_grad:
            res.append((beta, g.sum(axis=lead)))
        return res

    return _make(out, (x, gamma, beta), bw)


# -- lookup / regularisation / loss ------------------------------------

def embedding_lookup(table: Tensor, ids: Iterable[int]) -> Tensor:
    ids = np.asarray(list(ids) if not isinstance(ids, np.ndarray) else ids, dtype=np.int64)
    n = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        bad = ids[(ids < 0) | (ids >= n)][0]
        raise IndexError(f"embedding id {bad} out of range for table of {n} rows")
    return getitem(table, ids)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _make(x.data * keep, (x,), lambda g: [(x, g * keep)])


def log_softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))

    def bw(g):
        return [(x, g - np.exp(out) * g.sum(axis=-1, keepdims=True))]

    return _make(out, (x,), bw)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under row-wise softmax(logits)."""
    labels = np.asarray(labels, dtype=np.int64)
    n, m = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= m):
        raise IndexError(f"label out of range [0, {m}): {labels[(labels < 0) | (labels >= m)][0]}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(lse - z[rows, labels]))

    def bw(g):
        p = np.exp(z - lse[:, None])
        p[rows, labels] -= 1.0
        return [(logits, g * p / n)]

    return _make(np.array(loss), (logits,), bw)
