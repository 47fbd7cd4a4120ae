"""Command-line entry point (``mmerc`` / ``python -m mmerc``).

Exit status: 0 on success, 1 on data/config/checkpoint errors, 2 on usage
errors (argparse).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..config import ConfigError, load_config
from ..dataio import CorpusError, CorpusMeta, load_corpus, split, synth_corpus, write_corpus
from ..graph import build_graph, export_graph
from ..numerics import ShapeError
from .ablation import ablate, parse_variants
from .metrics import write_confusion_csv
from .training import (Checkpoint, CheckpointMismatch, DivergenceError, evaluate,
                       evaluate_params, train)

log = logging.getLogger("mmerc")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmerc", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoint + metrics")
    p.add_argument("--config", type=Path, help="TOML key/value run configuration")
    p.add_argument("--data", type=Path, required=True, help="training corpus (JSONL)")
    p.add_argument("--valid", type=Path, help="validation corpus; default: split from --data")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value (repeatable)")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--json", action="store_true", help="print machine-readable metrics")

    p = sub.add_parser("synth", help="write a planted-signal synthetic corpus")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n", type=int, required=True, help="number of conversations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mu", type=float, default=3.0, help="planted class shift")
    p.add_argument("--min-len", type=int, default=5)
    p.add_argument("--max-len", type=int, default=15)
    p.add_argument("--speakers", type=int, default=2)
    p.add_argument("--classes", type=int, default=6)
    p.add_argument("--dims", type=int, nargs=3, metavar=("D_A", "D_V", "D_L"),
                   default=(100, 512, 768))

    p = sub.add_parser("graph", help="graph utilities")
    gsub = p.add_subparsers(dest="graph_command", required=True)
    g = gsub.add_parser("export", help="write the multimodal graph of one conversation")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--past", type=int, required=True)
    g.add_argument("--future", type=int, required=True)
    g.add_argument("--format", choices=("edgelist", "dot"), default="edgelist")
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--no-rmulti", action="store_true")
    g.add_argument("--no-rtemp", action="store_true")

    p = sub.add_parser("ablate", help="train and compare ablation variants")
    p.add_argument("--config", type=Path)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--flags", required=True,
                   help="comma-separated variants, '+' joins flags (e.g. no_pcm,no_rmulti+modalities=at)")
    p.add_argument("--out", type=Path, help="write the JSON report here as well")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")

    p = sub.add_parser("report", help="reports derived from a checkpoint")
    rsub = p.add_subparsers(dest="report_command", required=True)
    r = rsub.add_parser("confusion", help="confusion matrix as CSV")
    r.add_argument("--checkpoint", type=Path, required=True)
    r.add_argument("--data", type=Path, required=True)
    r.add_argument("--out", type=Path, required=True)
    return ap


def _overrides(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def cmd_train(args) -> int:
    cfg = load_config(args.config, _overrides(args.set))
    meta, convs = load_corpus(args.data)
    if args.valid is not None:
        vmeta, valid = load_corpus(args.valid)
        if vmeta != meta:
            raise CorpusError("validation corpus metadata differs from training corpus")
        train_c = convs
    else:
        f = cfg.valid_fraction
        train_c, valid, _ = split(convs, (1.0 - f, f, 0.0), seed=cfg.seed)
    result = train(cfg, meta, train_c, valid)
    args.out.mkdir(parents=True, exist_ok=True)
    result.checkpoint.save(args.out / "checkpoint.bin")
    params = result.checkpoint.params()
    metrics = {"best_epoch": result.checkpoint.best_epoch,
               "train": evaluate_params(params, cfg, meta, train_c).to_json()}
    if valid:
        metrics["valid"] = evaluate_params(params, cfg, meta, valid).to_json()
    _write_json(args.out / "metrics.json", metrics)
    _write_json(args.out / "training_log.json",
                {"loss_curve": result.loss_curve, "epochs": [e.to_json() for e in result.history]})
    print(f"best epoch {result.checkpoint.best_epoch}; wrote {args.out}/checkpoint.bin")
    return 0


def cmd_eval(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    meta, convs = load_corpus(args.data)
    report = evaluate(ckpt, meta, convs)
    if args.json:
        sys.stdout.write(report.dumps())
    else:
        print(f"accuracy     {report.accuracy:.4f}")
        print(f"weighted F1  {report.weighted_f1:.4f}")
        for name, f1 in zip(meta.label_names, report.per_class_f1):
            print(f"  F1 {name:<12} {f1:.4f}")
    return 0


def cmd_synth(args) -> int:
    d_a, d_v, d_l = args.dims
    meta = CorpusMeta(d_a, d_v, d_l, args.classes, args.speakers)
    meta, convs = synth_corpus(args.n, (args.min_len, args.max_len), args.speakers, meta,
                               seed=args.seed, mu=args.mu)
    write_corpus(args.out, meta, convs)
    print(f"wrote {len(convs)} conversations to {args.out}")
    return 0


def cmd_graph(args) -> int:
    graph = build_graph(args.n, args.past, args.future, multimodal=not args.no_rmulti,
                        temporal=not args.no_rtemp)
    export_graph(graph, args.out, args.format)
    print(f"wrote {len(graph.edges)} edges to {args.out}")
    return 0


def cmd_ablate(args) -> int:
    cfg = load_config(args.config, _overrides(args.set))
    meta, convs = load_corpus(args.data)
    reports = ablate(cfg, meta, convs, parse_variants(args.flags))
    payload = [r.to_json() for r in reports]
    if args.out is not None:
        _write_json(args.out, payload)
    print(f"{'variant':<28} {'params':>10} {'edges':>7} {'acc':>7} {'w-F1':>7}")
    for r in reports:
        print(f"{r.name:<28} {r.parameters:>10} {r.edges:>7} "
              f"{r.metrics.accuracy:>7.4f} {r.metrics.weighted_f1:>7.4f}")
    return 0


def cmd_report(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    meta, convs = load_corpus(args.data)
    report = evaluate(ckpt, meta, convs)
    write_confusion_csv(args.out, report, meta.label_names)
    print(f"wrote confusion matrix to {args.out}")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "synth": cmd_synth, "graph": cmd_graph,
            "ablate": cmd_ablate, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CorpusError, ConfigError, CheckpointMismatch, DivergenceError, ShapeError,
            ValueError, KeyError, OSError) as exc:
        print(f"mmerc {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
