"""Seeded random search over booster hyperparameters, scored by CV mean AUC."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..errors import DataError
from ..learner import TrainConfig, train_booster
from .metrics import roc_auc
from .split import stratified_folds

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchSpace:
    n_trees: tuple[int, int] = (50, 300)
    max_depth: tuple[int, int] = (2, 6)
    learning_rate: tuple[float, float] = (0.02, 0.3)   # log-uniform
    l2_reg: tuple[float, float] = (0.1, 10.0)          # log-uniform
    min_child_hessian: tuple[float, float] = (0.5, 5.0)
    min_split_gain: tuple[float, float] = (0.0, 1.0)

    def validate(self) -> None:
        for name in self.__dataclass_fields__:
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"search bounds for {name} are reversed")
        if self.learning_rate[0] <= 0 or self.l2_reg[0] <= 0:
            raise ValueError("log-uniform bounds must be positive")

    def sample(self, rng: np.random.Generator, base: TrainConfig) -> TrainConfig:
        def log_uniform(lo, hi):
            return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
        return replace(
            base,
            n_trees=int(rng.integers(self.n_trees[0], self.n_trees[1] + 1)),
            max_depth=int(rng.integers(self.max_depth[0], self.max_depth[1] + 1)),
            learning_rate=log_uniform(*self.learning_rate),
            l2_reg=log_uniform(*self.l2_reg),
            min_child_hessian=float(rng.uniform(*self.min_child_hessian)),
            min_split_gain=float(rng.uniform(*self.min_split_gain)),
        )


@dataclass
class Trial:
    index: int
    config: TrainConfig
    objective: float | None     # None when the trial failed
    error: str | None = None

    def as_dict(self) -> dict:
        return {"index": self.index, "config": self.config.to_dict(), "objective": self.objective,
                "error": self.error}


def cv_mean_auc(X, y, rows, config: TrainConfig, folds, feature_names=None) -> float:
    aucs = []
    for val in folds:
        tr = np.setdiff1d(rows, val, assume_unique=True)
        model, _ = train_booster(X[tr], y[tr], config, feature_names)
        aucs.append(roc_auc(model.predict_proba(X[val]), y[val]))
    return float(np.mean(aucs))


def search_hyperparameters(X, y, rows, n_trials: int, seed: int, *, space: SearchSpace | None = None,
                           base: TrainConfig | None = None, n_folds: int = 5, feature_names=None,
                           threads: int = 1) -> tuple[TrainConfig, list[Trial]]:
    """Evaluate ``n_trials`` sampled configs by CV mean AUC on ``rows``; return the best and the log.

    All configs are drawn up front from one seeded stream, so the trial
    sequence does not depend on ``threads``. Ties go to the earliest trial.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    space = space or SearchSpace()
    space.validate()
    base = base or TrainConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(np.int64)
    rows = np.asarray(rows, dtype=np.int64)
    rng = np.random.default_rng([seed, 7])
    configs = [space.sample(rng, base) for _ in range(n_trials)]
    folds = stratified_folds(rows, y[rows], n_folds, np.random.default_rng([seed, 8]))

    def run(i):
        try:
            return Trial(i, configs[i], cv_mean_auc(X, y, rows, configs[i], folds, feature_names))
        except (DataError, ValueError, FloatingPointError) as exc:
            log.warning("trial %d failed: %s", i, exc)
            return Trial(i, configs[i], None, str(exc))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            trials = list(pool.map(run, range(n_trials)))
    else:
        trials = [run(i) for i in range(n_trials)]
    ok = [t for t in trials if t.objective is not None]
    if not ok:
        raise DataError("every search trial failed")
    best = max(ok, key=lambda t: (t.objective, -t.index))
    return best.config, trials
