"""Ranking and threshold metrics for binary scores."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from ..errors import DegenerateLabels

THRESHOLD_GRID = np.arange(1, 200) / 200.0


@dataclass(frozen=True)
class EvalReport:
    threshold: float
    tn: int
    fp: int
    fn: int
    tp: int
    accuracy: float
    precision: float         # positive class
    recall: float
    f1: float
    precision_neg: float
    recall_neg: float
    f1_neg: float
    f1_weighted: float
    roc_auc: float | None
    average_precision: float | None

    @property
    def n(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    def as_dict(self) -> dict:
        d = asdict(self)
        d["n"] = self.n
        return d


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be vectors of equal length")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def roc_auc(scores, labels) -> float:
    """Probability a random positive outranks a random negative, ties counting half."""
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels()
    ranks = rankdata(s)  # average ranks give ties half credit
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Sum over distinct score cutoffs of (recall gain) * precision at that cutoff."""
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise DegenerateLabels()
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]  # final index of each tied block
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def confusion(scores, labels, threshold: float) -> tuple[int, int, int, int]:
    s, y = _check(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    tn = int(np.sum(~pred & (y == 0)))
    return tn, fp, fn, tp


def f_beta(precision: float, recall: float, beta: float = 1.0) -> float:
    b2 = beta * beta
    denom = b2 * precision + recall
    return (1 + b2) * precision * recall / denom if denom > 0 else 0.0


def _ratio(a: int, b: int) -> float:
    return a / b if b else 0.0


def report_from_confusion(tn: int, fp: int, fn: int, tp: int, threshold: float,
                          auc: float | None = None, ap: float | None = None) -> EvalReport:
    n = tn + fp + fn + tp
    p, r = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
    pn, rn = _ratio(tn, tn + fn), _ratio(tn, tn + fp)
    f1, f1n = f_beta(p, r), f_beta(pn, rn)
    pos, neg = tp + fn, tn + fp
    weighted = (f1 * pos + f1n * neg) / n if n else 0.0
    return EvalReport(float(threshold), tn, fp, fn, tp, _ratio(tn + tp, n), p, r, f1, pn, rn, f1n,
                      weighted, auc, ap)


def compute_metrics(scores, labels, threshold: float = 0.5) -> EvalReport:
    """Confusion-matrix metrics at ``threshold`` plus AUC and AP when both classes occur."""
    s, y = _check(scores, labels)
    tn, fp, fn, tp = confusion(s, y, threshold)
    auc = ap = None
    if 0 < y.sum() < y.size:
        auc, ap = roc_auc(s, y), average_precision(s, y)
    return report_from_confusion(tn, fp, fn, tp, threshold, auc, ap)


def fbeta_at(scores, labels, thresholds, beta: float = 1.0) -> np.ndarray:
    """F_beta of the positive class for each threshold (score >= t predicts positive)."""
    s, y = _check(scores, labels)
    t = np.asarray(thresholds, dtype=float)
    pos_sorted = np.sort(s[y == 1])
    neg_sorted = np.sort(s[y == 0])
    tp = pos_sorted.size - np.searchsorted(pos_sorted, t, side="left")
    fp = neg_sorted.size - np.searchsorted(neg_sorted, t, side="left")
    fn = pos_sorted.size - tp
    b2 = beta * beta
    denom = (1 + b2) * tp + b2 * fn + fp
    return np.where(tp > 0, (1 + b2) * tp / np.maximum(denom, 1), 0.0)


def tune_threshold(scores, labels, beta: float = 1.0, grid=THRESHOLD_GRID) -> tuple[float, float]:
    """Grid threshold maximizing F_beta; the lowest threshold wins ties."""
    s, y = _check(scores, labels)
    if y.size == 0 or y.min() == y.max():
        raise DegenerateLabels()
    if not beta > 0:
        raise ValueError("beta must be positive")
    f = fbeta_at(s, y, grid, beta)
    k = int(np.argmax(f))
    return float(grid[k]), float(f[k])
