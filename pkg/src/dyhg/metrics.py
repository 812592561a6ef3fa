"""Bag-level classification metrics computed from a confusion matrix."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


@dataclass
class MetricsReport:
    accuracy: float
    balanced_accuracy: float
    specificity: float
    weighted_f1: float
    confusion: np.ndarray  # rows = truth, cols = prediction

    FIELDS = ("accuracy", "balanced_accuracy", "specificity", "weighted_f1")

    def row(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self.FIELDS}

    def __eq__(self, other) -> bool:
        if not isinstance(other, MetricsReport):
            return NotImplemented
        return self.row() == other.row() and np.array_equal(self.confusion, other.confusion)


def confusion_matrix(pairs: Iterable[tuple[int, int]], num_classes: int) -> np.ndarray:
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    for truth, pred in pairs:
        cm[truth, pred] += 1
    return cm


def from_confusion(cm: np.ndarray) -> MetricsReport:
    """Derive the four metrics from a C x C count matrix.

    * balanced accuracy averages recall over classes present in the truth;
    * specificity is the one-vs-rest TN/(TN+FP) averaged over classes that
      occur in the truth or the predictions and have at least one negative
      sample (1.0 if no class qualifies);
    * weighted F1 weights per-class F1 by support, F1 = 0 on a zero denominator.
    """
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total == 0:
        raise ValueError("metrics need at least one prediction")
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    fp = predicted - tp
    fn = support - tp
    tn = total - tp - fp - fn

    present = support > 0
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=present)
    balanced = float(recall[present].mean())

    negatives = tn + fp
    spec_mask = (present | (predicted > 0)) & (negatives > 0)
    spec = np.divide(tn, negatives, out=np.ones_like(tn), where=negatives > 0)
    specificity = float(spec[spec_mask].mean()) if spec_mask.any() else 1.0

    f1_den = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, f1_den, out=np.zeros_like(tp), where=f1_den > 0)
    weighted_f1 = float((support / total * f1).sum())

    return MetricsReport(
        accuracy=float(tp.sum() / total),
        balanced_accuracy=balanced,
        specificity=specificity,
        weighted_f1=weighted_f1,
        confusion=cm,
    )


def compute_metrics(pairs: Iterable[tuple[int, int]], num_classes: int) -> MetricsReport:
    pairs = list(pairs)
    if not pairs:
        raise ValueError("compute_metrics: empty prediction list")
    return from_confusion(confusion_matrix(pairs, num_classes))
