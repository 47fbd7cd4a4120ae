"""Multimodal dialogue graph: three nodes per utterance, 15 relation types.

Nine multimodal relations join the modality nodes of one utterance (including
a self-loop per modality); six temporal relations join same-modality nodes
of nearby utterances, split by modality and past/future.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

MODALITIES = ("a", "v", "l")

MULTIMODAL_RELATIONS = ("a->v", "v->a", "a->a", "v->l", "l->v", "v->v", "l->a", "a->l", "l->l")
TEMPORAL_RELATIONS = ("past_a", "past_v", "past_l", "future_a", "future_v", "future_l")
RELATIONS = MULTIMODAL_RELATIONS + TEMPORAL_RELATIONS
RELATION_INDEX = {r: k for k, r in enumerate(RELATIONS)}

# DOT node shapes per modality: audio square, visual circle, text triangle
_DOT_SHAPES = {"a": "square", "v": "circle", "l": "triangle"}


class NodeId(NamedTuple):
    utterance: int
    modality: str


class Edge(NamedTuple):
    src: NodeId
    dst: NodeId
    rel: str


def multimodal_endpoints(rel: str) -> tuple[str, str]:
    src, dst = rel.split("->")
    return src, dst


def relations_for(modalities: Sequence[str] = MODALITIES, multimodal: bool = True,
                  temporal: bool = True) -> tuple[str, ...]:
    """Relation tags that can occur for a modality subset.

    A single modality has no multimodal relations at all, self-loop included.
    """
    mods = set(modalities)
    rels = []
    if multimodal and len(mods) > 1:
        rels += [r for r in MULTIMODAL_RELATIONS if set(multimodal_endpoints(r)) <= mods]
    if temporal:
        rels += [r for r in TEMPORAL_RELATIONS if r.split("_")[1] in mods]
    return tuple(r for r in RELATIONS if r in rels)


@dataclass(frozen=True)
class MultimodalGraph:
    n_utterances: int
    window: tuple[int, int]
    modalities: tuple[str, ...]
    edges: tuple[Edge, ...]

    @property
    def n_nodes(self) -> int:
        return len(self.modalities) * self.n_utterances

    def node_index(self, node: NodeId) -> int:
        """Row of ``node`` in the block-stacked feature matrix (modality blocks of N rows)."""
        return self.modalities.index(node.modality) * self.n_utterances + node.utterance

    def relations(self) -> tuple[str, ...]:
        present = {e.rel for e in self.edges}
        return tuple(r for r in RELATIONS if r in present)


def _edge_key(e: Edge):
    return (e.dst.utterance, MODALITIES.index(e.dst.modality), RELATION_INDEX[e.rel],
            e.src.utterance, MODALITIES.index(e.src.modality))


def build_graph(n: int, past: int, future: int, modalities: Sequence[str] = MODALITIES,
                multimodal: bool = True, temporal: bool = True,
                strict_window: bool = False) -> MultimodalGraph:
    """Build the edge set for an ``n``-utterance conversation with window [past, future].

    Past neighbours of utterance i are the ``past`` utterances just before it,
    future neighbours the ``future`` just after; every temporal edge points
    from the context utterance into i. ``strict_window`` reads the window
    bounds as open intervals, which yields one fewer neighbour on each side.
    """
    if n < 1:
        raise ValueError(f"a graph needs at least one utterance, got {n}")
    if past < 0 or future < 0:
        raise ValueError(f"window sizes must be non-negative, got [{past}, {future}]")
    mods = tuple(m for m in MODALITIES if m in set(modalities))
    if not mods:
        raise ValueError("at least one modality is required")
    rels = set(relations_for(mods, multimodal, temporal))
    p_eff = max(past - 1, 0) if strict_window else past
    f_eff = max(future - 1, 0) if strict_window else future
    edges = []
    for i in range(n):
        for rel in MULTIMODAL_RELATIONS:
            if rel in rels:
                s, d = multimodal_endpoints(rel)
                edges.append(Edge(NodeId(i, s), NodeId(i, d), rel))
        for m in mods:
            if f"past_{m}" in rels:
                for j in range(max(0, i - p_eff), i):
                    edges.append(Edge(NodeId(j, m), NodeId(i, m), f"past_{m}"))
            if f"future_{m}" in rels:
                for j in range(i + 1, min(n - 1, i + f_eff) + 1):
                    edges.append(Edge(NodeId(j, m), NodeId(i, m), f"future_{m}"))
    edges.sort(key=_edge_key)
    return MultimodalGraph(n, (past, future), mods, tuple(edges))


def edge_stats(graph: MultimodalGraph) -> dict[str, int]:
    counts = Counter(e.rel for e in graph.edges)
    return {r: counts.get(r, 0) for r in RELATIONS}


def expected_edge_count(n: int, past: int, future: int) -> int:
    return (9 * n + 3 * sum(min(i, past) for i in range(n))
            + 3 * sum(min(n - 1 - i, future) for i in range(n)))


# -- export / import ----------------------------------------------------

def format_edgelist(graph: MultimodalGraph) -> str:
    return "".join(f"{e.src.utterance} {e.src.modality} {e.dst.utterance} {e.dst.modality} {e.rel}\n"
                   for e in graph.edges)


def parse_edgelist(text: str) -> list[Edge]:
    edges = []
    for line in text.splitlines():
        if not line.strip():
            continue
        si, sm, di, dm, rel = line.split()
        if rel not in RELATION_INDEX:
            raise ValueError(f"unknown relation {rel!r}")
        edges.append(Edge(NodeId(int(si), sm), NodeId(int(di), dm), rel))
    return edges


def format_dot(graph: MultimodalGraph) -> str:
    out = ["digraph G {"]
    for m in graph.modalities:
        for i in range(graph.n_utterances):
            out.append(f'  "{m}{i}" [shape={_DOT_SHAPES[m]}, label="u{i}^{m}"];')
    for e in graph.edges:
        if e.rel in MULTIMODAL_RELATIONS:
            style = "color=blue"
        elif e.rel.startswith("past"):
            style = "color=red"
        else:
            style = "color=red, style=dashed"
        out.append(f'  "{e.src.modality}{e.src.utterance}" -> "{e.dst.modality}{e.dst.utterance}"'
                   f' [label="{e.rel}", {style}];')
    out.append("}")
    return "\n".join(out) + "\n"


def export_graph(graph: MultimodalGraph, path: str | Path, format: str = "edgelist") -> None:
    if format == "edgelist":
        text = format_edgelist(graph)
    elif format == "dot":
        text = format_dot(graph)
    else:
        raise ValueError(f"unknown graph format {format!r}")
    Path(path).write_text(text, encoding="utf-8")


# -- message-passing views ----------------------------------------------

@dataclass(frozen=True)
class BatchGraph:
    """Several conversation graphs merged into one disjoint graph.

    Nodes are ordered modality-major over the whole batch: all audio nodes
    (every utterance of every conversation, in order), then visual, then text.
    """
    n_utterances: int
    modalities: tuple[str, ...]
    src: np.ndarray
    dst: np.ndarray
    rel: np.ndarray  # relation index into RELATIONS
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return len(self.modalities) * self.n_utterances

    def relation_matrix(self, rel: str) -> sp.csr_matrix:
        """Row-normalised in-adjacency of one relation: row i averages over its rel-neighbours."""
        if rel not in self._cache:
            self._cache[rel] = self._relation_matrix(rel)
        return self._cache[rel]

    def _relation_matrix(self, rel: str) -> sp.csr_matrix:
        k = RELATION_INDEX[rel]
        sel = self.rel == k
        s, d = self.src[sel], self.dst[sel]
        n = self.n_nodes
        deg = np.bincount(d, minlength=n).astype(np.float64)
        w = 1.0 / deg[d] if d.size else np.zeros(0)
        return sp.csr_matrix((w, (d, s)), shape=(n, n))

    def neighbour_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique (src, dst) pairs over all relations, sorted by (dst, src)."""
        if "pairs" not in self._cache:
            if self.src.size == 0:
                self._cache["pairs"] = (self.src, self.dst)
            else:
                pairs = np.unique(np.stack([self.dst, self.src], axis=1), axis=0)
                self._cache["pairs"] = (pairs[:, 1], pairs[:, 0])
        return self._cache["pairs"]


def batch_graph(graphs: Iterable[MultimodalGraph]) -> BatchGraph:
    graphs = list(graphs)
    if not graphs:
        raise ValueError("empty batch")
    mods = graphs[0].modalities
    if any(g.modalities != mods for g in graphs):
        raise ValueError("graphs in one batch must share a modality set")
    total = sum(g.n_utterances for g in graphs)
    src, dst, rel = [], [], []
    offset = 0
    for g in graphs:
        for e in g.edges:
            src.append(mods.index(e.src.modality) * total + offset + e.src.utterance)
            dst.append(mods.index(e.dst.modality) * total + offset + e.dst.utterance)
            rel.append(RELATION_INDEX[e.rel])
        offset += g.n_utterances
    as_int = lambda xs: np.asarray(xs, dtype=np.int64)  # noqa: E731
    return BatchGraph(total, mods, as_int(src), as_int(dst), as_int(rel))
