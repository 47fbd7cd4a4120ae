"""Ablation runs: train and score a family of configuration variants."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

from ..config import ConfigError, RunConfig, parse_flags
from ..dataio import Conversation, CorpusMeta, split
from ..graph import relations_for
from ..model import build_params, conversation_graph
from .metrics import MetricsReport
from .training import evaluate_params, train


@dataclass
class VariantReport:
    name: str
    overrides: dict[str, Any]
    parameters: int
    edges: int
    metrics: MetricsReport

    def to_json(self) -> dict:
        return {"name": self.name, "overrides": self.overrides, "parameters": self.parameters,
                "edges": self.edges, "metrics": self.metrics.to_json()}


def parse_variants(csv: str) -> list[tuple[str, dict[str, Any]]]:
    """Comma-separated variants; ``+`` combines flags inside one variant.

    ``"no_pcm,no_rmulti+modalities=at"`` -> two variants besides the full model.
    """
    out = []
    for item in filter(None, (s.strip() for s in csv.split(","))):
        out.append((item, parse_flags(item.replace("+", ","))))
    return out


def count_edges(cfg: RunConfig, convs: Sequence[Conversation]) -> int:
    return sum(len(conversation_graph(cfg, len(c)).edges) for c in convs)


def rtgcn_parameter_total(cfg: RunConfig) -> int:
    """Closed-form RT-GCN parameter count for one relational + attention stack."""
    n_rel = len(relations_for(cfg.modality_set, not cfg.no_rmulti, not cfg.no_rtemp))
    total, d = 0, cfg.d_h
    for _ in range(cfg.rgcn_layers):
        total += (n_rel + 1) * cfg.d_h1 * d
        d = cfg.d_h1
    for _ in range(cfg.gt_layers):
        total += cfg.heads * (2 * cfg.d_h2 * d + 2 * cfg.d_alpha * d)
        d = cfg.heads * cfg.d_h2
    return total


def ablate(cfg: RunConfig, meta: CorpusMeta, convs: Sequence[Conversation],
           variants: Sequence[tuple[str, dict[str, Any]]],
           ratios: Sequence[float] = (0.8, 0.1, 0.1)) -> list[VariantReport]:
    """Train the full model and every variant on one split; score each on the test part."""
    train_c, valid_c, test_c = split(convs, ratios, seed=cfg.seed)
    eval_c = test_c or valid_c or train_c
    reports = []
    for name, overrides in [("full", {})] + list(variants):
        try:
            vcfg = RunConfig.from_dict({**cfg.to_dict(), **overrides})
        except ConfigError as exc:
            raise ConfigError(f"variant {name}: {exc}") from None
        result = train(vcfg, meta, train_c, valid_c, track_train=False)
        params = result.checkpoint.params()
        reports.append(VariantReport(name, dict(overrides),
                                     sum(p.data.size for p in params.values()),
                                     count_edges(vcfg, eval_c),
                                     evaluate_params(params, vcfg, meta, eval_c)))
    return reports


def parameter_count(cfg: RunConfig, meta: CorpusMeta) -> int:
    return sum(p.data.size for p in build_params(cfg, meta).values())
