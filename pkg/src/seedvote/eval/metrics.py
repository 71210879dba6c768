"""Classification metrics and distances between label distributions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from seedvote.data import K
from seedvote.errors import InputError


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    macro_f1: float
    mean_tv: Optional[float]
    mean_js: Optional[float]
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]

    def scalars(self) -> dict[str, Optional[float]]:
        return {"accuracy": self.accuracy, "macro_f1": self.macro_f1, "mean_tv": self.mean_tv, "mean_js": self.mean_js}


def _check_pair(preds, golds):
    preds = np.asarray(preds, dtype=np.int64)
    golds = np.asarray(golds, dtype=np.int64)
    if preds.shape != golds.shape:
        raise InputError("predictions and gold labels differ in length")
    if preds.size == 0:
        raise InputError("cannot score an empty prediction set")
    return preds, golds


def accuracy(preds, golds) -> float:
    preds, golds = _check_pair(preds, golds)
    return float(np.mean(preds == golds))


def per_class_prf(preds, golds, n_classes: int = K) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class precision, recall and F1. Zero denominators give 0."""
    preds, golds = _check_pair(preds, golds)
    if preds.min() < 0 or golds.min() < 0 or max(preds.max(), golds.max()) >= n_classes:
        raise InputError(f"labels must lie in [0, {n_classes})")
    tp = np.array([np.sum((preds == c) & (golds == c)) for c in range(n_classes)], dtype=np.float64)
    n_pred = np.bincount(preds, minlength=n_classes).astype(np.float64)
    n_gold = np.bincount(golds, minlength=n_classes).astype(np.float64)
    precision = np.divide(tp, n_pred, out=np.zeros(n_classes), where=n_pred > 0)
    recall = np.divide(tp, n_gold, out=np.zeros(n_classes), where=n_gold > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(n_classes), where=denom > 0)
    return precision, recall, f1


def macro_f1(preds, golds, n_classes: int = K) -> float:
    """Unweighted mean of per-class F1 over all classes, absent ones included."""
    return float(np.mean(per_class_prf(preds, golds, n_classes)[2]))


def tv_distance(p, q) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p, dtype=np.float64) - np.asarray(q, dtype=np.float64))))


def _kl2(p: np.ndarray, m: np.ndarray) -> float:
    nz = p > 0
    return float(np.sum(p[nz] * np.log2(p[nz] / m[nz])))


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence in bits, so it lies in [0, 1]."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    m = 0.5 * (p + q)
    js = 0.5 * _kl2(p, m) + 0.5 * _kl2(q, m)
    return min(max(js, 0.0), 1.0)


def metric_report(preds, golds, recovered=None, true_dist=None) -> MetricReport:
    p, r, f = per_class_prf(preds, golds)
    mean_tv = mean_js = None
    if recovered is not None and true_dist is not None:
        mean_tv = float(np.mean([tv_distance(a, b) for a, b in zip(recovered, true_dist)]))
        mean_js = float(np.mean([js_divergence(a, b) for a, b in zip(recovered, true_dist)]))
    return MetricReport(
        accuracy=accuracy(preds, golds),
        macro_f1=float(np.mean(f)),
        mean_tv=mean_tv,
        mean_js=mean_js,
        precision=tuple(float(x) for x in p),
        recall=tuple(float(x) for x in r),
        f1=tuple(float(x) for x in f),
    )
