"""Full classifier: encoders -> (RT-GCN, P-CM) -> fusion -> classifier."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import numerics as nx
from .config import RunConfig
from .dataio import Conversation, CorpusMeta
from .encoders import (add_speaker, encode_av, encode_text, init_av_encoder,
                       init_speaker_table, init_text_encoder)
from .graph import BatchGraph, MultimodalGraph, batch_graph, build_graph, relations_for
from .head import fuse, init_head, logits
from .numerics import Tensor
from .params import ParamStore, subtree
from .pcm import PAIRS, init_pcm, pcm_forward
from .rtgcn import init_graph_transformer, init_rgcn, rt_gcn_forward

_ENCODER_NAMES = {"a": "audio", "v": "visual", "l": "text"}


def conversation_graph(cfg: RunConfig, n: int) -> MultimodalGraph:
    return build_graph(n, cfg.past, cfg.future, cfg.modality_set,
                       multimodal=not cfg.no_rmulti, temporal=not cfg.no_rtemp,
                       strict_window=cfg.strict_window)


def build_params(cfg: RunConfig, meta: CorpusMeta, seed: int | None = None) -> ParamStore:
    """Initialise every learnable weight the configuration calls for."""
    store = ParamStore(np.random.default_rng(cfg.seed if seed is None else seed))
    mods = cfg.modality_set
    widths = {"a": meta.d_a, "v": meta.d_v, "l": meta.d_l}
    for m in mods:
        if m == "l":
            init_text_encoder(store, "encoders.text", meta.d_l, cfg.d_h, cfg.text_layers)
        else:
            init_av_encoder(store, f"encoders.{_ENCODER_NAMES[m]}", widths[m], cfg.d_h)
    init_speaker_table(store, "encoders.speaker", meta.N_S, cfg.d_h)
    if cfg.use_rtgcn:
        rels = relations_for(mods, multimodal=not cfg.no_rmulti, temporal=not cfg.no_rtemp)
        d = cfg.d_h
        for k in range(cfg.rgcn_layers):
            init_rgcn(store, f"rtgcn.rgcn{k}", rels, d, cfg.d_h1)
            d = cfg.d_h1
        for k in range(cfg.gt_layers):
            init_graph_transformer(store, f"rtgcn.gt{k}", cfg.heads, d, cfg.d_h2, cfg.d_alpha)
            d = cfg.heads * cfg.d_h2
        if d != cfg.heads * cfg.d_h2:
            raise ValueError("RT-GCN without a graph-transformer layer is not supported")
    if cfg.use_pcm:
        init_pcm(store, "pcm", mods, cfg.pcm_depth, cfg.value_width)
    init_head(store, "head", cfg.fused_width(), cfg.classifier_width(), meta.M)
    return store


@dataclass
class Batch:
    """Several conversations laid end to end (utterance rows in conversation order)."""
    lengths: list[int]
    features: dict[str, np.ndarray]
    speakers: np.ndarray
    labels: np.ndarray
    graph: BatchGraph
    same_conversation: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return int(sum(self.lengths))


def make_batch(cfg: RunConfig, convs: Sequence[Conversation]) -> Batch:
    lengths = [len(c) for c in convs]
    feats = {m: np.concatenate([c.features(m) for c in convs]) for m in cfg.modality_set}
    conv_id = np.repeat(np.arange(len(convs)), lengths)
    graph = batch_graph(conversation_graph(cfg, n) for n in lengths)
    return Batch(lengths=lengths, features=feats,
                 speakers=np.concatenate([c.speakers for c in convs]),
                 labels=np.concatenate([c.labels for c in convs]),
                 graph=graph, same_conversation=conv_id[:, None] == conv_id[None, :])


@dataclass
class Forward:
    logits: Tensor
    encoded: dict[str, Tensor]
    graph_out: dict[str, Tensor]
    pairs: dict[tuple[str, str], Tensor]
    fused: Tensor


def forward(params, cfg: RunConfig, batch: Batch, training: bool = False,
            rng: np.random.Generator | None = None,
            inputs: dict[str, Tensor] | None = None) -> Forward:
    """Run the model on a batch. ``inputs`` may supply the raw feature tensors
    (e.g. with ``requires_grad`` for sensitivity checks)."""
    if training and cfg.dropout > 0 and rng is None:
        raise ValueError("training-mode forward needs an rng for dropout")
    mask = batch.same_conversation
    inputs = inputs or {m: Tensor(batch.features[m]) for m in cfg.modality_set}
    table = params["encoders.speaker.table"]
    encoded = {}
    for m in cfg.modality_set:
        if m == "l":
            x = encode_text(inputs[m], subtree(params, "encoders.text"), cfg.text_heads,
                            mask, cfg.ln_eps)
        else:
            x = encode_av(inputs[m], subtree(params, f"encoders.{_ENCODER_NAMES[m]}"))
        encoded[m] = add_speaker(x, batch.speakers, table, cfg.eta)

    graph_out: dict[str, Tensor] = {}
    if cfg.use_rtgcn:
        graph_out = rt_gcn_forward(batch.graph, encoded, subtree(params, "rtgcn"))
    pairs: dict[tuple[str, str], Tensor] = {}
    if cfg.use_pcm:
        pairs = pcm_forward(encoded, subtree(params, "pcm"), n_heads=cfg.pcm_heads,
                            mask=mask, dropout=cfg.dropout, training=training, rng=rng,
                            eps=cfg.ln_eps)
    blocks = [graph_out[m] for m in ("a", "v", "l") if m in graph_out]
    blocks += [pairs[p] for p in PAIRS if p in pairs]
    h = fuse(blocks)
    z = logits(h, subtree(params, "head"), cfg.dropout, training, rng)
    return Forward(z, encoded, graph_out, pairs, h)


def loss_and_logits(params, cfg: RunConfig, batch: Batch, training: bool = False,
                    rng: np.random.Generator | None = None) -> tuple[Tensor, np.ndarray]:
    out = forward(params, cfg, batch, training, rng)
    return nx.cross_entropy(out.logits, batch.labels), out.logits.data


def parameter_count(params, prefix: str = "") -> int:
    return sum(v.data.size for k, v in params.items()
               if not prefix or k.startswith(prefix + "."))
