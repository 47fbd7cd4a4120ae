"""Mini-batch training, evaluation and checkpoint I/O."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import numerics as nx
from ..config import RunConfig
from ..dataio import Conversation, CorpusMeta
from ..head import predict
from ..model import build_params, forward, make_batch
from ..params import ParamStore
from .metrics import MetricsReport, compute_metrics

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    pass


class CheckpointMismatch(ValueError):
    pass


@dataclass
class Checkpoint:
    config: RunConfig
    meta: CorpusMeta
    arrays: dict[str, np.ndarray]
    best_epoch: int = 0

    def params(self) -> ParamStore:
        store = build_params(self.config, self.meta)
        store.load_arrays(self.arrays)
        return store

    def save(self, path: str | Path) -> None:
        nx.save_checkpoint(path, self.arrays, {"config": self.config.to_dict(),
                                               "corpus_meta": self.meta.to_json(),
                                               "best_epoch": self.best_epoch})

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        arrays, meta = nx.load_checkpoint(path)
        try:
            cfg = RunConfig.from_dict(meta["config"])
            cmeta = CorpusMeta.from_json(meta["corpus_meta"])
        except KeyError as exc:
            raise CheckpointMismatch(f"{path}: checkpoint lacks {exc.args[0]}") from None
        return cls(cfg, cmeta, arrays, int(meta.get("best_epoch", 0)))


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    train: MetricsReport | None = None
    valid: MetricsReport | None = None

    def to_json(self) -> dict:
        out = {"epoch": self.epoch, "train_loss": self.train_loss}
        if self.train is not None:
            out["train"] = self.train.to_json()
        if self.valid is not None:
            out["valid"] = self.valid.to_json()
        return out


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[EpochLog] = field(default_factory=list)

    @property
    def loss_curve(self) -> list[float]:
        return [e.train_loss for e in self.history]


def batches(convs: Sequence[Conversation], size: int, order: Sequence[int] | None = None):
    order = range(len(convs)) if order is None else order
    picked = [convs[k] for k in order]
    for start in range(0, len(picked), size):
        yield picked[start:start + size]


def predict_corpus(params, cfg: RunConfig, convs: Sequence[Conversation]):
    """Eval-mode logits for every utterance, concatenated in corpus order."""
    all_logits, all_labels = [], []
    for group in batches(convs, cfg.batch_dialogues):
        b = make_batch(cfg, group)
        all_logits.append(forward(params, cfg, b, training=False).logits.data)
        all_labels.append(b.labels)
    if not all_logits:
        return np.zeros((0, 0)), np.zeros(0, dtype=np.int64)
    return np.concatenate(all_logits), np.concatenate(all_labels)


def evaluate_params(params, cfg: RunConfig, meta: CorpusMeta,
                    convs: Sequence[Conversation]) -> MetricsReport:
    z, labels = predict_corpus(params, cfg, convs)
    if labels.size == 0:
        return compute_metrics([], [], meta.M)
    loss = float(nx.cross_entropy(nx.Tensor(z), labels).data)
    _, yhat = predict(z)
    return compute_metrics(labels, yhat, meta.M, loss=loss)


def evaluate(checkpoint: Checkpoint | str | Path, meta: CorpusMeta,
             convs: Sequence[Conversation]) -> MetricsReport:
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = Checkpoint.load(checkpoint)
    if checkpoint.meta.to_json() != meta.to_json():
        raise CheckpointMismatch(
            f"checkpoint was trained on {checkpoint.meta.to_json()} "
            f"but the corpus declares {meta.to_json()}")
    return evaluate_params(checkpoint.params(), checkpoint.config, meta, convs)


def train(cfg: RunConfig, meta: CorpusMeta, train_convs: Sequence[Conversation],
          valid_convs: Sequence[Conversation] = (), track_train: bool = True,
          stop_at_train_accuracy: float | None = None) -> TrainResult:
    """Adam over shuffled dialogue mini-batches; keeps the best-validation checkpoint.

    Selection key is (valid w-F1, -valid loss); with no validation data the
    final epoch is kept. Every random draw comes from streams seeded by
    ``cfg.seed``, so identical inputs give identical results.
    ``stop_at_train_accuracy`` ends training after the first epoch whose
    eval-mode train accuracy reaches it.
    """
    if not train_convs and cfg.epochs > 0:
        raise ValueError("no training conversations")
    params = build_params(cfg, meta)
    opt = nx.Adam(params, lr=cfg.learning_rate, beta1=cfg.adam_beta1,
                  beta2=cfg.adam_beta2, eps=cfg.adam_eps)
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    dropout_rng = np.random.default_rng([cfg.seed, 2])

    best = Checkpoint(cfg, meta, {k: v.copy() for k, v in params.arrays().items()}, 0)
    best_key = None
    history: list[EpochLog] = []
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(train_convs))
        total, count = 0.0, 0
        for b_idx, group in enumerate(batches(train_convs, cfg.batch_dialogues, order)):
            batch = make_batch(cfg, group)
            opt.zero_grad()
            out = forward(params, cfg, batch, training=True, rng=dropout_rng)
            loss = nx.cross_entropy(out.logits, batch.labels)
            value = float(loss.data)
            if not np.isfinite(value):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {b_idx}")
            nx.backward(loss)
            opt.step()
            total += value * batch.n
            count += batch.n
        entry = EpochLog(epoch, total / count)
        if track_train:
            entry.train = evaluate_params(params, cfg, meta, train_convs)
        if valid_convs:
            entry.valid = evaluate_params(params, cfg, meta, valid_convs)
            key = (entry.valid.weighted_f1, -entry.valid.loss)
        else:
            key = (epoch, 0.0)
        if best_key is None or key > best_key:
            best_key = key
            best = Checkpoint(cfg, meta, {k: v.copy() for k, v in params.arrays().items()}, epoch)
        history.append(entry)
        log.info("epoch %d loss %.4f%s", epoch, entry.train_loss,
                 f" valid w-F1 {entry.valid.weighted_f1:.4f}" if entry.valid else "")
        if (stop_at_train_accuracy is not None and entry.train is not None
                and entry.train.accuracy >= stop_at_train_accuracy):
            break
    return TrainResult(best, history)
