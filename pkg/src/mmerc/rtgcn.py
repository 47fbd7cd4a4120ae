"""Relational graph convolution followed by graph-transformer attention.

Node features are block-stacked by modality (see ``graph.BatchGraph``). The
relational layer averages ``W_r x_j`` over each relation's in-neighbours and
adds a self term ``W_0 x_i``; the attention layer then mixes each node with
its pooled in-neighbourhood, one softmax per head.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from . import numerics as nx
from .graph import RELATIONS, BatchGraph
from .numerics import ShapeError, Tensor
from .params import ParamStore, subtree


def init_rgcn(store: ParamStore, prefix: str, relations: Sequence[str], d_in: int,
              d_out: int) -> None:
    store.glorot(f"{prefix}.W0", (d_out, d_in))
    for rel in relations:
        store.glorot(f"{prefix}.W.{rel}", (d_out, d_in))


def init_graph_transformer(store: ParamStore, prefix: str, n_heads: int, d_in: int,
                           d_out: int, d_alpha: int) -> None:
    if n_heads < 1:
        raise ValueError("graph transformer needs at least one head")
    for c in range(n_heads):
        p = f"{prefix}.head{c}"
        store.glorot(f"{p}.W1", (d_out, d_in))
        store.glorot(f"{p}.W2", (d_out, d_in))
        store.glorot(f"{p}.W3", (d_alpha, d_in))
        store.glorot(f"{p}.W4", (d_alpha, d_in))


def rgcn_layer(graph: BatchGraph, x: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """g_i = sum_r sum_{j in N_r(i)} W_r x_j / |N_r(i)| + W_0 x_i."""
    W0 = params["W0"]
    if x.ndim != 2 or x.shape[0] != graph.n_nodes or x.shape[1] != W0.shape[1]:
        raise ShapeError(f"rgcn expects ({graph.n_nodes}, {W0.shape[1]}) features, got {x.shape}")
    out = x @ W0.T
    for rel in graph_relations(graph):
        key = f"W.{rel}"
        if key not in params:
            raise KeyError(f"graph uses relation {rel} but no weight {key} exists")
        out = out + nx.sparse_matmul(graph.relation_matrix(rel), x) @ params[key].T
    return out


def graph_relations(graph: BatchGraph) -> list[str]:
    return [RELATIONS[k] for k in np.unique(graph.rel)]


def graph_transformer_layer(graph: BatchGraph, g: Tensor, params: Mapping[str, Tensor],
                            attn_out: list | None = None) -> Tensor:
    """Per head: o_i = W_1 g_i + sum_{j in N(i)} alpha_ij W_2 g_j, heads concatenated.

    alpha_i. is a softmax over the pooled in-neighbourhood N(i) of
    (W_3 g_i)ᵀ(W_4 g_j) / sqrt(d_alpha). Nodes without in-neighbours keep
    only the W_1 term. Per-edge weights go to ``attn_out`` when given.
    """
    if g.ndim != 2 or g.shape[0] != graph.n_nodes:
        raise ShapeError(f"graph transformer expects {graph.n_nodes} rows, got {g.shape}")
    src, dst = graph.neighbour_pairs()
    n = graph.n_nodes
    heads = []
    c = 0
    while f"head{c}.W1" in params:
        W1, W2, W3, W4 = (params[f"head{c}.W{k}"] for k in (1, 2, 3, 4))
        if W1.shape[1] != g.shape[1]:
            raise ShapeError(f"graph transformer input width {W1.shape[1]}, got {g.shape[1]}")
        out = g @ W1.T
        if src.size:
            q, k = g @ W3.T, g @ W4.T
            scores = (q[dst] * k[src]).sum(axis=1) * (1.0 / np.sqrt(W3.shape[0]))
            alpha = nx.segment_softmax(scores, dst, n)
            if attn_out is not None:
                attn_out.append((src, dst, alpha.data))
            msg = (g @ W2.T)[src] * nx.reshape(alpha, (-1, 1))
            out = out + nx.segment_sum(msg, dst, n)
        heads.append(out)
        c += 1
    if not heads:
        raise KeyError("graph transformer parameters contain no heads")
    return heads[0] if len(heads) == 1 else nx.concat(heads, axis=1)


def stack_modalities(xs: Mapping[str, Tensor], modalities: Sequence[str]) -> Tensor:
    parts = [xs[m] for m in modalities]
    return parts[0] if len(parts) == 1 else nx.concat(parts, axis=0)


def split_modalities(h: Tensor, modalities: Sequence[str], n: int) -> dict[str, Tensor]:
    return {m: h[k * n:(k + 1) * n] for k, m in enumerate(modalities)}


def rt_gcn_forward(graph: BatchGraph, xs: Mapping[str, Tensor],
                   params: Mapping[str, Tensor], attn_out: list | None = None) -> dict[str, Tensor]:
    """Encoder outputs per modality -> G^tau per modality (N x C*d_h2).

    ``params`` holds ``rgcn{k}.*`` and ``gt{k}.*`` layers; all relational
    layers run first, then the attention layers.
    """
    n = graph.n_utterances
    for m in graph.modalities:
        if xs[m].shape[0] != n:
            raise ShapeError(f"modality {m} has {xs[m].shape[0]} rows, graph has {n} utterances")
    h = stack_modalities(xs, graph.modalities)
    k = 0
    while f"rgcn{k}.W0" in params:
        h = rgcn_layer(graph, h, subtree(params, f"rgcn{k}"))
        k += 1
    k = 0
    while f"gt{k}.head0.W1" in params:
        h = graph_transformer_layer(graph, h, subtree(params, f"gt{k}"), attn_out)
        k += 1
    return split_modalities(h, graph.modalities, n)
