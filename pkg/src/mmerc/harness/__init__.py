from .metrics import MetricsReport, compute_metrics, confusion_matrix
from .training import Checkpoint, DivergenceError, TrainResult, evaluate, evaluate_params, train

__all__ = ["Checkpoint", "DivergenceError", "MetricsReport", "TrainResult", "compute_metrics",
           "confusion_matrix", "evaluate", "evaluate_params", "train"]
