"""Gradient-boosted trees for binary classification with a weighted log-loss."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import expit

from ..errors import DataError, DegenerateLabels
from .tree import Tree, TreeGrower, apply_bins, bin_edges

log = logging.getLogger(__name__)

# keeps logistic() strictly inside (0, 1) in binary64
MARGIN_CLIP = 36.0
MAX_BACKTRACK = 50


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 100
    max_depth: int = 4
    learning_rate: float = 0.1
    l2_reg: float = 1.0
    min_split_gain: float = 0.0
    min_child_hessian: float = 1.0
    positive_class_weight: float = 1.0
    n_bins: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be >= 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.l2_reg < 0 or self.min_split_gain < 0 or self.min_child_hessian < 0:
            raise ValueError("l2_reg, min_split_gain and min_child_hessian must be nonnegative")
        if not self.positive_class_weight > 0:
            raise ValueError("positive_class_weight must be positive")
        if self.n_bins < 0 or self.n_bins == 1:
            raise ValueError("n_bins must be 0 (exact greedy) or >= 2")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        cfg = cls(**known)
        # JSON round trips ints as ints and floats as floats; normalize the types
        return replace(cfg, n_trees=int(cfg.n_trees), max_depth=int(cfg.max_depth), n_bins=int(cfg.n_bins),
                       seed=int(cfg.seed), learning_rate=float(cfg.learning_rate), l2_reg=float(cfg.l2_reg),
                       min_split_gain=float(cfg.min_split_gain),
                       min_child_hessian=float(cfg.min_child_hessian),
                       positive_class_weight=float(cfg.positive_class_weight))


@dataclass
class BoosterModel:
    base_score: float
    trees: list[Tree]
    config: TrainConfig
    feature_names: tuple[str, ...]
    step_scales: list[float] = field(default_factory=list)

    def margin(self, X: np.ndarray) -> np.ndarray:
        X = _check_width(X, len(self.feature_names))
        m = np.full(X.shape[0], self.base_score)
        for t in self.trees:
            m = m + t.predict(X)
        return m

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return logistic(self.margin(X))


def logistic(m: np.ndarray) -> np.ndarray:
    m = np.clip(np.asarray(m, dtype=float), -MARGIN_CLIP, MARGIN_CLIP)
    return 1.0 / (1.0 + np.exp(-m))


def weighted_log_loss(y: np.ndarray, margin: np.ndarray, w: np.ndarray) -> float:
    """Sum_i w_i * logloss_i / Sum_i w_i, evaluated stably from raw margins."""
    per_row = np.logaddexp(0.0, margin) - y * margin
    return float(np.dot(w, per_row) / w.sum())


def gradients(y: np.ndarray, margin: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = expit(margin)
    return w * (p - y), w * p * (1.0 - p)


def _check_width(X, width: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != width:
        raise ValueError(f"expected a matrix with {width} columns, got shape {X.shape}")
    return X


def check_training_data(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("feature matrix must be 2-D and nonempty")
    if y.shape != (X.shape[0],):
        raise DataError("labels must be a vector with one entry per row")
    if not np.all((y == 0) | (y == 1)):
        raise DataError("labels must be 0 or 1")
    if y.min() == y.max():
        raise DegenerateLabels()
    bad = np.argwhere(~np.isfinite(X))
    if bad.size:
        r, c = bad[0]
        raise DataError(f"non-finite feature value at row {int(r)}, column {int(c)}")
    return X, y


def sample_weights(y: np.ndarray, positive_class_weight: float) -> np.ndarray:
    return np.where(y == 1, positive_class_weight, 1.0)


def train_booster(X, y, config: TrainConfig, feature_names: Sequence[str] | None = None
                  ) -> tuple[BoosterModel, list[float]]:
    """Fit a boosted ensemble; returns the model and the training loss after each round.

    The trace starts with the loss of the base score alone. Should a tree ever
    raise the weighted training loss, its leaf values are halved until it no
    longer does (``model.step_scales`` records the factor applied per tree).
    """
    X, y = check_training_data(X, y)
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(X.shape[1]))
    if len(names) != X.shape[1]:
        raise ValueError("feature_names length does not match the matrix width")
    w = sample_weights(y, config.positive_class_weight)
    base = float(np.log(np.dot(w, y) / np.dot(w, 1.0 - y)))
    margin = np.full(y.size, base)
    trace = [weighted_log_loss(y, margin, w)]
    model = BoosterModel(base, [], config, names)
    if config.n_trees == 0:
        return model, trace

    edges = [bin_edges(X[:, f], config.n_bins) for f in range(X.shape[1])]
    grower = TreeGrower(apply_bins(X, edges), edges, config.max_depth, config.l2_reg,
                        config.min_split_gain, config.min_child_hessian, config.learning_rate)
    for it in range(config.n_trees):
        g, h = gradients(y, margin, w)
        tree, leaves = grower.grow(g, h)
        delta = np.empty(y.size)
        for rows, node in leaves:
            delta[rows] = tree.value[node]
        scale = 1.0
        for _ in range(MAX_BACKTRACK):
            candidate = margin + delta * scale
            loss = weighted_log_loss(y, candidate, w)
            if loss <= trace[-1]:
                break
            scale *= 0.5
        else:
            log.debug("round %d: no non-increasing step found, stopping", it)
            break
        if scale != 1.0:
            log.debug("round %d: leaf values scaled by %g", it, scale)
            tree = tree.scaled(scale)
        # recompute exactly as predict() will, so the trace matches served margins
        margin = margin + tree.predict(X)
        loss = weighted_log_loss(y, margin, w)
        model.trees.append(tree)
        model.step_scales.append(scale)
        trace.append(loss)
    return model, trace


def predict_proba(model, X) -> np.ndarray:
    return model.predict_proba(X)
