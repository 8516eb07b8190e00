"""L2-regularized logistic regression fitted by full-batch gradient descent."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .booster import check_training_data, logistic


@dataclass
class LinearModel:
    weights: np.ndarray
    intercept: float
    feature_names: tuple[str, ...]
    l2: float = 0.0

    def margin(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.weights.size:
            raise ValueError(f"expected a matrix with {self.weights.size} columns, got shape {X.shape}")
        return X @ self.weights + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        return logistic(self.margin(X))


def _objective(X, y, w, b, l2):
    m = X @ w + b
    return float(np.mean(np.logaddexp(0.0, m) - y * m) + 0.5 * l2 * np.dot(w, w))


def train_logistic_baseline(X, y, l2: float = 1e-3, epochs: int = 300, step: float = 1.0,
                            feature_names: Sequence[str] | None = None) -> tuple[LinearModel, list[float]]:
    """Minimize mean log-loss + l2/2 * |w|^2 (intercept unpenalized).

    Starts from zero weights and the base-rate log-odds. A step that would
    raise the objective is rejected and the step size halved.
    """
    X, y = check_training_data(X, y)
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(X.shape[1]))
    n = y.size
    w = np.zeros(X.shape[1])
    b = float(np.log(y.sum() / (n - y.sum())))
    trace = [_objective(X, y, w, b, l2)]
    lr = step
    for _ in range(epochs):
        p = logistic(X @ w + b)
        gw = X.T @ (p - y) / n + l2 * w
        gb = float(np.mean(p - y))
        while lr > 1e-12:
            w_new, b_new = w - lr * gw, b - lr * gb
            obj = _objective(X, y, w_new, b_new, l2)
            if obj <= trace[-1]:
                w, b = w_new, b_new
                trace.append(obj)
                break
            lr *= 0.5
        else:
            break
    return LinearModel(w, b, names, l2), trace
