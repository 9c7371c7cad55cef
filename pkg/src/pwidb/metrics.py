"""Ranking and thresholded metrics for the fraud (label 1) class."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class Evaluation:
    auc: float
    f1: float
    precision: float
    recall: float
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n_pos(self) -> int:
        return self.tp + self.fn

    @property
    def n_neg(self) -> int:
        return self.fp + self.tn

    def get(self, metric: str) -> float:
        return {"AUC": self.auc, "F1": self.f1}[metric.upper()]


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with average ranks for tied scores."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC undefined: labels contain a single class")
    ranks = rankdata(scores, method="average")
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def confusion(pred, labels, positive: int = 1) -> tuple[int, int, int, int]:
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    if pred.shape != labels.shape:
        raise ValueError("pred and labels differ in length")
    p = pred == positive
    t = labels == positive
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    tn = len(labels) - tp - fp - fn
    return tp, fp, tn, fn


def _prf(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def f1(pred, labels, positive: int = 1) -> float:
    tp, fp, _, fn = confusion(pred, labels, positive)
    return _prf(tp, fp, fn)[2]


def evaluate(scores, labels, threshold: float = 0.5) -> Evaluation:
    scores = np.asarray(scores, dtype=np.float64)
    pred = (scores >= threshold).astype(np.int8)
    tp, fp, tn, fn = confusion(pred, labels)
    precision, recall, f = _prf(tp, fp, fn)
    return Evaluation(auc(scores, labels), f, precision, recall, tp, fp, tn, fn)


def score(metric: str, scores, labels, threshold: float = 0.5) -> float:
    metric = metric.upper()
    if metric == "AUC":
        return auc(scores, labels)
    if metric == "F1":
        return f1((np.asarray(scores) >= threshold).astype(np.int8), labels)
    raise ValueError(f"unknown metric {metric!r}")
