"""Pairwise cross-modal transformer.

For a directed pair ``src -> tgt`` the target sequence is refined over D
layers; each layer attends from the current target state (queries) to the
layer-0 source sequence (keys, values), adds the normalised target state back,
and runs a position-wise ReLU feed-forward block with a second residual.
Each unordered pair yields both directions concatenated feature-wise.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from . import numerics as nx
from .encoders import multi_head_attention
from .numerics import ShapeError, Tensor
from .params import ParamStore, subtree

# unordered pairs in fusion order; pair (x, y) -> [y->x stack, x->y stack]
PAIRS = (("a", "v"), ("v", "l"), ("l", "a"))


def pairs_for(modalities) -> list[tuple[str, str]]:
    mods = set(modalities)
    return [p for p in PAIRS if set(p) <= mods]


def direction_key(src: str, tgt: str) -> str:
    return f"{src}_to_{tgt}"


def init_direction(store: ParamStore, prefix: str, depth: int, d_model: int,
                   d_ff: int) -> None:
    for i in range(depth):
        p = f"{prefix}.layer{i}"
        for name in ("Wq", "Wk", "Wv"):
            store.glorot(f"{p}.{name}", (d_model, d_model))
        store.ones(f"{p}.ln1.gamma", (d_model,))
        store.zeros(f"{p}.ln1.beta", (d_model,))
        store.ones(f"{p}.ln2.gamma", (d_model,))
        store.zeros(f"{p}.ln2.beta", (d_model,))
        store.glorot(f"{p}.Omega1", (d_model, d_ff))
        store.zeros(f"{p}.b1", (d_ff,))
        store.glorot(f"{p}.Omega2", (d_ff, d_model))
        store.zeros(f"{p}.b2", (d_model,))


def init_pcm(store: ParamStore, prefix: str, modalities, depth: int, d_model: int,
             d_ff: int | None = None) -> None:
    d_ff = d_ff or 4 * d_model
    for x, y in pairs_for(modalities):
        init_direction(store, f"{prefix}.{direction_key(y, x)}", depth, d_model, d_ff)
        init_direction(store, f"{prefix}.{direction_key(x, y)}", depth, d_model, d_ff)


def cross_modal_attention(x_q: Tensor, x_kv: Tensor, params: Mapping[str, Tensor],
                          n_heads: int = 1, mask: np.ndarray | None = None,
                          attn_out: list | None = None) -> Tensor:
    """softmax(X_q W_Q (X_kv W_K)ᵀ / sqrt(d_K)) X_kv W_V, split over heads."""
    if x_q.shape[1] != params["Wq"].shape[0] or x_kv.shape[1] != params["Wk"].shape[0]:
        raise ShapeError(f"cross-modal attention width mismatch: {x_q.shape}, {x_kv.shape}")
    if x_q.shape[0] != x_kv.shape[0]:
        raise ShapeError(f"query/key sequences differ in length: {x_q.shape[0]} vs {x_kv.shape[0]}")
    return multi_head_attention(x_q, x_kv, params["Wq"], params["Wk"], params["Wv"],
                                n_heads, mask, attn_out)


def cross_modal_block(z_prev: Tensor, z_src0: Tensor, params: Mapping[str, Tensor],
                      n_heads: int = 1, mask: np.ndarray | None = None,
                      dropout: float = 0.0, training: bool = False,
                      rng: np.random.Generator | None = None, eps: float = 1e-5,
                      attn_out: list | None = None) -> Tensor:
    ln1 = lambda t: nx.layer_norm(t, params["ln1.gamma"], params["ln1.beta"], eps)  # noqa: E731
    q = ln1(z_prev)
    att = cross_modal_attention(q, ln1(z_src0), params, n_heads, mask, attn_out)
    z_bar = nx.dropout(att, dropout, training, rng) + q
    h = nx.layer_norm(z_bar, params["ln2.gamma"], params["ln2.beta"], eps)
    ffn = nx.relu(h @ params["Omega1"] + params["b1"]) @ params["Omega2"] + params["b2"]
    return nx.dropout(ffn, dropout, training, rng) + h


def cross_modal_stack(z_tgt0: Tensor, z_src0: Tensor, params: Mapping[str, Tensor],
                      **kw) -> Tensor:
    """D blocks (``layer0`` .. ``layer{D-1}``); D = 0 returns the target unchanged."""
    z = z_tgt0
    i = 0
    while f"layer{i}.Wq" in params:
        z = cross_modal_block(z, z_src0, subtree(params, f"layer{i}"), **kw)
        i += 1
    return z


def pcm_forward(xs: Mapping[str, Tensor], params: Mapping[str, Tensor],
                **kw) -> dict[tuple[str, str], Tensor]:
    """Speaker-enhanced encoder outputs -> one (N x 2 d_V) matrix per modality pair."""
    out = {}
    for x, y in PAIRS:
        if x not in xs or y not in xs:
            continue
        sides = []
        for src, tgt in ((y, x), (x, y)):
            sub = subtree(params, direction_key(src, tgt))
            sides.append(cross_modal_stack(xs[tgt], xs[src], sub, **kw))
        out[(x, y)] = nx.concat(sides, axis=1)
    return out
