import numpy as np
import pytest

from delayabsorb.errors import DataError
from delayabsorb.learner import TrainConfig
from delayabsorb.pipeline.search import SearchSpace, search_hyperparameters

SMALL = SearchSpace(n_trees=(5, 15), max_depth=(1, 3))


def data(n=240, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    y = (X[:, 0] + 0.5 * rng.normal(size=n) > 0).astype(int)
    return X, y


def test_single_trial_returns_its_config():
    X, y = data()
    best, trials = search_hyperparameters(X, y, np.arange(240), 1, seed=3, space=SMALL, n_folds=3)
    assert len(trials) == 1 and best == trials[0].config


def test_best_is_argmax_and_search_is_deterministic():
    X, y = data()
    best, trials = search_hyperparameters(X, y, np.arange(240), 5, seed=3, space=SMALL, n_folds=3)
    objs = [t.objective for t in trials]
    winner = next(t for t in trials if t.config == best)
    assert all(winner.objective >= o for o in objs)
    again, trials2 = search_hyperparameters(X, y, np.arange(240), 5, seed=3, space=SMALL, n_folds=3, threads=3)
    assert again == best and [t.as_dict() for t in trials2] == [t.as_dict() for t in trials]


def test_samples_respect_bounds():
    rng = np.random.default_rng(0)
    space = SearchSpace()
    for _ in range(200):
        c = space.sample(rng, TrainConfig())
        assert 50 <= c.n_trees <= 300 and 2 <= c.max_depth <= 6
        assert 0.02 <= c.learning_rate <= 0.3 and 0.1 <= c.l2_reg <= 10
    with pytest.raises(ValueError):
        SearchSpace(max_depth=(5, 2)).validate()


def test_failed_trials_are_logged_and_skipped(caplog):
    X, y = data()
    y_bad = np.zeros_like(y)
    y_bad[:3] = 1
    # with 3 positives over 5 folds some validation folds hold one class, so AUC is undefined
    with pytest.raises(DataError, match="every search trial failed"):
        search_hyperparameters(X, y_bad, np.arange(240), 2, seed=0, space=SMALL, n_folds=5)
    assert sum("failed" in r.message for r in caplog.records) == 2
