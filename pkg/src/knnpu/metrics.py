"""Classification metrics for the positive class: F1, G-Mean and ROC AUC."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import MismatchedLength, SingleClassScores


@dataclass(frozen=True)
class MetricsTriple:
    f1: float
    g_mean: float
    auc_roc: float | None  # None when the evaluated labels hold one class

    def as_dict(self) -> dict:
        return {"f1": self.f1, "g_mean": self.g_mean, "auc_roc": self.auc_roc}


METRIC_NAMES = ("f1", "g_mean", "auc_roc")


def confusion(y_true, y_pred) -> tuple[int, int, int, int]:
    """(tp, fp, fn, tn) with the positive class encoded as True/1."""
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    if y_true.shape != y_pred.shape:
        raise MismatchedLength("label and prediction vectors differ in length")
    tp = int(np.sum(y_true & y_pred))
    fp = int(np.sum(~y_true & y_pred))
    fn = int(np.sum(y_true & ~y_pred))
    tn = int(np.sum(~y_true & ~y_pred))
    return tp, fp, fn, tn


def f1_positive(tp: int, fp: int, fn: int) -> float:
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    denom = 2 * tp + fp + fn
    # 2PR/(P+R) simplifies to 2tp/(2tp+fp+fn); tp=0 gives 0
    return 2 * tp / denom if denom and tp else 0.0


def g_mean(tp: int, fp: int, fn: int, tn: int) -> float:
    if min(tp, fp, fn, tn) < 0:
        raise ValueError("counts must be non-negative")
    sens = tp / (tp + fn) if tp + fn else 0.0
    spec = tn / (tn + fp) if tn + fp else 0.0
    return math.sqrt(sens * spec)


def auc_roc(scores, labels=None) -> float:
    """Mann-Whitney AUC; tied (positive, negative) pairs count one half.

    Accepts either parallel ``scores``/``labels`` arrays or a single
    sequence of ``(score, label)`` pairs.
    """
    if labels is None:
        pairs = list(scores)
        scores = [s for s, _ in pairs]
        labels = [l for _, l in pairs]
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise MismatchedLength("scores and labels differ in length")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassScores("AUC needs at least one positive and one negative")
    ranks = rankdata(s)  # average ranks handle ties
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def evaluate(y_true, prob, threshold: float = 0.5) -> MetricsTriple:
    """Threshold ``prob`` for F1/G-Mean; AUC uses the raw probabilities."""
    y_true = np.asarray(y_true).astype(bool)
    prob = np.asarray(prob, dtype=np.float64)
    tp, fp, fn, tn = confusion(y_true, prob >= threshold)
    try:
        auc = auc_roc(prob, y_true)
    except SingleClassScores:
        auc = None
    return MetricsTriple(f1_positive(tp, fp, fn), g_mean(tp, fp, fn, tn), auc)
