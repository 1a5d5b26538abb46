"""Evaluation metrics: RMSE, confusion matrix, accuracy, F1, Jaccard, kappa."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def rmse(pred, target) -> float:
    p = np.asarray(pred, dtype=float)
    t = np.asarray(target, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError("empty arrays")
    return float(np.sqrt(np.mean((p - t) ** 2)))


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_labels(cls, y_true, y_pred) -> "ConfusionMatrix":
        t = np.asarray(y_true)
        p = np.asarray(y_pred)
        if t.shape != p.shape:
            raise ValueError(f"shape mismatch: {t.shape} vs {p.shape}")
        return cls(
            tp=int(np.sum((t == 1) & (p == 1))),
            tn=int(np.sum((t == 0) & (p == 0))),
            fp=int(np.sum((t == 0) & (p == 1))),
            fn=int(np.sum((t == 1) & (p == 0))),
        )


@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    f1: float
    jaccard: float
    kappa: float
    degenerate: tuple[str, ...] = ()

    def as_dict(self) -> dict[str, float]:
        return {
            "accuracy": self.accuracy,
            "f1": self.f1,
            "jaccard": self.jaccard,
            "kappa": self.kappa,
        }


def classification_metrics(cm: ConfusionMatrix) -> ClassificationMetrics:
    """Accuracy, F1, Jaccard index, and Cohen's kappa from one confusion matrix.

    A metric whose denominator is zero is reported as 0 and listed in
    ``degenerate`` instead of raising, so fold aggregation never aborts.
    """
    n = cm.total
    if n == 0:
        raise ValueError("empty confusion matrix")
    degenerate: list[str] = []
    accuracy = (cm.tp + cm.tn) / n

    d_f1 = 2 * cm.tp + cm.fp + cm.fn
    if d_f1 == 0:
        f1 = 0.0
        degenerate.append("f1")
    else:
        f1 = 2 * cm.tp / d_f1

    d_j = cm.tp + cm.fp + cm.fn
    if d_j == 0:
        jaccard = 0.0
        degenerate.append("jaccard")
    else:
        jaccard = cm.tp / d_j

    p_o = accuracy
    actual_pos = (cm.tp + cm.fn) / n
    pred_pos = (cm.tp + cm.fp) / n
    p_e = actual_pos * pred_pos + (1 - actual_pos) * (1 - pred_pos)
    if math.isclose(p_e, 1.0, abs_tol=1e-15):
        kappa = 0.0
        degenerate.append("kappa")
    else:
        kappa = (p_o - p_e) / (1 - p_e)

    return ClassificationMetrics(accuracy, f1, jaccard, kappa, tuple(degenerate))
