from collections import OrderedDict
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..errors import ArgumentError, DimensionError

__all__ = ["ConfusionMatrix", "MetricsReport", "BinaryConfusionMetric", "compute_metrics", "report_from_confusion",
           "f1_score", "METRIC_NAMES"]

METRIC_NAMES = ("accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsReport:
    """
    A ratio with a zero denominator is reported as 0 and its *_undefined flag is set.
    """
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: ConfusionMatrix
    threshold: float = 0.5
    precision_undefined: bool = False
    recall_undefined: bool = False
    f1_undefined: bool = False

    def metrics(self) -> "OrderedDict[str, float]":
        return OrderedDict((name, getattr(self, name)) for name in METRIC_NAMES)


def _ratio(numerator: int, denominator: int) -> Tuple[float, bool]:
    if denominator == 0:
        return 0., True
    return numerator / denominator, False


def f1_score(precision: float, recall: float) -> Tuple[float, bool]:
    if precision + recall == 0:
        return 0., True
    return 2 * precision * recall / (precision + recall), False


def report_from_confusion(confusion: ConfusionMatrix, threshold: float = 0.5) -> MetricsReport:
    if confusion.total == 0:
        raise ArgumentError("Cannot compute metrics of zero predictions")
    accuracy = (confusion.tp + confusion.tn) / confusion.total
    precision, precision_undefined = _ratio(confusion.tp, confusion.tp + confusion.fp)
    recall, recall_undefined = _ratio(confusion.tp, confusion.tp + confusion.fn)
    f1, f1_undefined = f1_score(precision, recall)
    return MetricsReport(accuracy=accuracy, precision=precision, recall=recall, f1=f1, confusion=confusion,
                         threshold=threshold, precision_undefined=precision_undefined,
                         recall_undefined=recall_undefined, f1_undefined=f1_undefined)


class BinaryConfusionMetric:
    """
    Accumulates a confusion matrix over batches of probabilities.
    """

    def __init__(self, threshold: float = 0.5):
        if not 0. <= threshold <= 1.:
            raise ArgumentError(f"Threshold must be in [0, 1]: {threshold}")
        self._threshold = threshold
        self.confusion_matrix = np.zeros((2, 2), dtype=np.int64)  # [prediction, target]

    def update(self, probs: np.ndarray, targets: np.ndarray):
        probs, targets = np.ravel(probs), np.ravel(targets).astype(np.int64)
        if probs.shape != targets.shape:
            raise DimensionError(f"{probs.shape[0]} predictions for {targets.shape[0]} labels")
        if np.any((targets != 0) & (targets != 1)):
            raise ArgumentError("Labels must be 0 or 1")
        preds = (probs >= self._threshold).astype(np.int64)
        np.add.at(self.confusion_matrix, (preds, targets), 1)

    def compute(self) -> MetricsReport:
        (tn, fn), (fp, tp) = self.confusion_matrix.tolist()
        return report_from_confusion(ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn), self._threshold)

    def reset(self):
        self.confusion_matrix[...] = 0


def compute_metrics(labels: np.ndarray, probs: np.ndarray, threshold: float = 0.5) -> MetricsReport:
    """
    prediction = 1 iff prob >= threshold. Pass 0/1 predictions as probs to score hard predictions.
    """
    metric = BinaryConfusionMetric(threshold)
    metric.update(probs, labels)
    return metric.compute()
