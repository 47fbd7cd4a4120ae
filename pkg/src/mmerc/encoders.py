"""Unimodal utterance encoders and the speaker-embedding enhancement.

Audio and visual features go through one affine map each. Text goes through
a small pre-LN self-attention encoder over the utterances of a conversation
(no positional encoding; order is handled by the graph) and is then
projected. Every encoder emits width ``d_h``.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from . import numerics as nx
from .numerics import ShapeError, Tensor
from .params import ParamStore, subtree


def init_av_encoder(store: ParamStore, prefix: str, d_in: int, d_h: int) -> None:
    store.glorot(f"{prefix}.W", (d_h, d_in))
    store.zeros(f"{prefix}.b", (d_h,))


def init_text_encoder(store: ParamStore, prefix: str, d_l: int, d_h: int,
                      n_layers: int = 1, d_ff: int | None = None) -> None:
    d_ff = d_ff or d_l
    for k in range(n_layers):
        p = f"{prefix}.layer{k}"
        store.ones(f"{p}.ln1.gamma", (d_l,))
        store.zeros(f"{p}.ln1.beta", (d_l,))
        for name in ("Wq", "Wk", "Wv", "Wo"):
            store.glorot(f"{p}.{name}", (d_l, d_l))
        store.ones(f"{p}.ln2.gamma", (d_l,))
        store.zeros(f"{p}.ln2.beta", (d_l,))
        store.glorot(f"{p}.W1", (d_l, d_ff))
        store.zeros(f"{p}.b1", (d_ff,))
        store.glorot(f"{p}.W2", (d_ff, d_l))
        store.zeros(f"{p}.b2", (d_l,))
    store.glorot(f"{prefix}.proj.W", (d_h, d_l))
    store.zeros(f"{prefix}.proj.b", (d_h,))


def init_speaker_table(store: ParamStore, prefix: str, n_speakers: int, d_h: int) -> None:
    store.normal(f"{prefix}.table", (n_speakers, d_h), std=1.0 / np.sqrt(d_h))


def encode_av(features: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    W, b = params["W"], params["b"]
    if features.ndim != 2 or features.shape[1] != W.shape[1]:
        raise ShapeError(f"encoder expects width {W.shape[1]}, got features {features.shape}")
    return features @ W.T + b


def multi_head_attention(xq: Tensor, xkv: Tensor, Wq: Tensor, Wk: Tensor, Wv: Tensor,
                         n_heads: int, mask: np.ndarray | None = None,
                         attn_out: list | None = None) -> Tensor:
    """softmax(Q Kᵀ / sqrt(d_head)) V per head, heads concatenated.

    ``mask`` (Nq x Nk, bool) restricts which keys each query sees; it is how a
    batch of conversations is kept apart. Attention matrices are appended to
    ``attn_out`` when given.
    """
    d_k, d_v = Wq.shape[1], Wv.shape[1]
    if d_k % n_heads or d_v % n_heads:
        raise ShapeError(f"widths ({d_k}, {d_v}) not divisible by {n_heads} heads")
    q, k, v = xq @ Wq, xkv @ Wk, xkv @ Wv
    hk, hv = d_k // n_heads, d_v // n_heads
    if mask is None:
        mask = np.ones((xq.shape[0], xkv.shape[0]), dtype=bool)
    heads = []
    for h in range(n_heads):
        qh = q[:, h * hk:(h + 1) * hk]
        kh = k[:, h * hk:(h + 1) * hk]
        vh = v[:, h * hv:(h + 1) * hv]
        alpha = nx.masked_softmax((qh @ kh.T) * (1.0 / np.sqrt(hk)), mask)
        if attn_out is not None:
            attn_out.append(alpha.data)
        heads.append(alpha @ vh)
    return heads[0] if n_heads == 1 else nx.concat(heads, axis=1)


def encode_text(text: Tensor, params: Mapping[str, Tensor], n_heads: int = 4,
                mask: np.ndarray | None = None, eps: float = 1e-5) -> Tensor:
    """Pooled utterance text vectors (N x d_l) -> x^l rows (N x d_h)."""
    d_l = params["proj.W"].shape[1]
    if text.ndim != 2 or text.shape[1] != d_l:
        raise ShapeError(f"text encoder expects width {d_l}, got {text.shape}")
    x = text
    k = 0
    while f"layer{k}.Wq" in params:
        p = subtree(params, f"layer{k}")
        h = nx.layer_norm(x, p["ln1.gamma"], p["ln1.beta"], eps)
        att = multi_head_attention(h, h, p["Wq"], p["Wk"], p["Wv"], n_heads, mask)
        x = x + att @ p["Wo"]
        h = nx.layer_norm(x, p["ln2.gamma"], p["ln2.beta"], eps)
        x = x + nx.relu(h @ p["W1"] + p["b1"]) @ p["W2"] + p["b2"]
        k += 1
    return x @ params["proj.W"].T + params["proj.b"]


def add_speaker(x: Tensor, speakers: Sequence[int] | np.ndarray, table: Tensor,
                eta: float) -> Tensor:
    """Row i becomes ``eta * table[speaker_i] + x[i]``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"speaker mixing ratio must lie in [0, 1], got {eta}")
    if table.shape[1] != x.shape[1]:
        raise ShapeError(f"speaker table width {table.shape[1]} != features {x.shape[1]}")
    if eta == 0.0:
        return x
    return x + nx.embedding_lookup(table, speakers) * eta
