from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass
class MetricsReport:
    accuracy: float
    weighted_f1: float
    per_class_f1: list[float]
    confusion: list[list[int]]
    loss: float | None = None
    loss_curve: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        out = {"accuracy": self.accuracy, "weighted_f1": self.weighted_f1,
               "per_class_f1": self.per_class_f1, "confusion": self.confusion}
        if self.loss is not None:
            out["loss"] = self.loss
        if self.loss_curve:
            out["loss_curve"] = self.loss_curve
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"


def confusion_matrix(labels: Sequence[int], preds: Sequence[int], n_classes: int) -> np.ndarray:
    """Rows are gold labels, columns predictions."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels, dtype=np.int64), np.asarray(preds, dtype=np.int64)), 1)
    return cm


def f1_from_confusion(cm: np.ndarray) -> np.ndarray:
    tp = np.diag(cm).astype(np.float64)
    pred_pos = cm.sum(axis=0).astype(np.float64)
    gold_pos = cm.sum(axis=1).astype(np.float64)
    denom = pred_pos + gold_pos
    # F1 = 2PR/(P+R) = 2 tp / (pred_pos + gold_pos); 0 when the class never appears
    return np.divide(2.0 * tp, denom, out=np.zeros_like(tp), where=denom > 0)


def compute_metrics(labels: Sequence[int], preds: Sequence[int], n_classes: int,
                    loss: float | None = None) -> MetricsReport:
    labels = np.asarray(labels, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    if labels.shape != preds.shape:
        raise ValueError(f"{labels.size} labels but {preds.size} predictions")
    cm = confusion_matrix(labels, preds, n_classes)
    f1 = f1_from_confusion(cm)
    n = labels.size
    freq = cm.sum(axis=1) / n if n else np.zeros(n_classes)
    acc = float(np.trace(cm) / n) if n else 0.0
    return MetricsReport(accuracy=acc, weighted_f1=float(np.dot(freq, f1)),
                         per_class_f1=[float(x) for x in f1],
                         confusion=cm.tolist(), loss=loss)


def write_confusion_csv(path: str | Path, report: MetricsReport,
                        label_names: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["gold\\pred", *label_names])
        for name, row in zip(label_names, report.confusion):
            w.writerow([name, *row])
