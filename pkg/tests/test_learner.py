import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delayabsorb.errors import DataError, DegenerateLabels
from delayabsorb.learner import (ModelFormatError, TrainConfig, deserialize_model, load_model, logistic,
                                 save_model, serialize_model, train_booster, train_logistic_baseline)
from delayabsorb.learner.booster import gradients, sample_weights
from delayabsorb.learner.tree import bin_edges, leaf_weight, split_gain
from oracles import brute_root_split, numeric_derivatives, pair_auc


def noisy_data(seed=0, n=400, d=5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    X[:, 1] = np.round(X[:, 1], 1)
    m = 1.5 * X[:, 0] - X[:, 1] + 0.5 * X[:, 2] * X[:, 3]
    y = (rng.random(n) < 1 / (1 + np.exp(-m))).astype(float)
    return X, y


def test_leaf_weight_arithmetic():
    assert leaf_weight(-2.0, 4.0, 1.0, 1.0) == pytest.approx(0.4)
    assert split_gain(-2.0, 1.0, 2.0, 1.0, 1.0) == pytest.approx(2.0)


def test_separable_one_dimension():
    x = np.array([-5, -4, -3, -2, -1, 1, 2, 3, 4, 5], dtype=float)[:, None]
    y = (x[:, 0] > 0).astype(float)
    model, _ = train_booster(x, y, TrainConfig(n_trees=1, max_depth=1, learning_rate=1.0, n_bins=0,
                                               min_child_hessian=0.0))
    assert model.trees[0].threshold[0] == -1.0
    assert np.all((model.predict_proba(x) >= 0.5) == (y == 1))


def test_empty_ensemble_predicts_base_rate():
    X, y = noisy_data()
    model, trace = train_booster(X, y, TrainConfig(n_trees=0))
    assert len(trace) == 1 and model.trees == []
    np.testing.assert_allclose(model.predict_proba(X), y.mean(), rtol=1e-12)


def test_logistic_range():
    assert logistic(np.array([0.0]))[0] == 0.5
    big = logistic(np.array([1e6, -1e6]))
    assert 0 < big[1] < big[0] < 1


def test_input_errors():
    X, y = noisy_data()
    with pytest.raises(DegenerateLabels, match="degenerate labels"):
        train_booster(X, np.ones_like(y), TrainConfig(n_trees=2))
    bad = X.copy()
    bad[7, 3] = np.nan
    with pytest.raises(DataError, match="row 7, column 3"):
        train_booster(bad, y, TrainConfig(n_trees=2))
    model, _ = train_booster(X, y, TrainConfig(n_trees=2))
    with pytest.raises(ValueError):
        model.predict_proba(X[:, :3])
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)


def test_trace_never_increases():
    X, y = noisy_data(1)
    _, trace = train_booster(X, y, TrainConfig(n_trees=60, max_depth=3, learning_rate=0.3))
    assert np.all(np.diff(trace) <= 1e-12)
    assert trace[-1] < trace[0]


def test_root_split_matches_brute_force():
    for seed in range(10):
        X, y = noisy_data(seed, n=120, d=4)
        cfg = TrainConfig(n_trees=1, max_depth=1, learning_rate=1.0, n_bins=0, l2_reg=1.0, min_child_hessian=1.0)
        model, _ = train_booster(X, y, cfg)
        w = sample_weights(y, 1.0)
        g, h = gradients(y, np.full(y.size, model.base_score), w)
        f, t, _ = brute_root_split(X, g, h, 1.0, 0.0, 1.0)
        assert (model.trees[0].feature[0], model.trees[0].threshold[0]) == (f, t)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    y = (rng.random(200) < 0.3).astype(float)
    m = rng.normal(scale=3, size=200)
    w = sample_weights(y, 2.5)
    g, h = gradients(y, m, w)
    d1, d2 = numeric_derivatives(y, m, w)
    np.testing.assert_allclose(g, d1, atol=1e-6)
    np.testing.assert_allclose(h, d2, atol=1e-4)


def test_binned_edges_are_data_values():
    col = np.random.default_rng(0).normal(size=1000)
    e = bin_edges(col, 16)
    assert np.isin(e, col).all() and e.size <= 15 and np.all(np.diff(e) > 0)
    assert np.array_equal(bin_edges(np.array([3.0, 1.0, 2.0, 2.0]), 0), [1.0, 2.0])


def test_serialization_round_trip_is_bit_exact(tmp_path):
    X, y = noisy_data(2)
    model, _ = train_booster(X, y, TrainConfig(n_trees=20, max_depth=3), feature_names=list("abcde"))
    save_model(model, tmp_path / "m.json")
    again = load_model(tmp_path / "m.json")
    Xt = np.random.default_rng(9).normal(size=(100, 5))
    assert np.array_equal(again.predict_proba(Xt), model.predict_proba(Xt))
    assert serialize_model(again) == serialize_model(model)
    assert again.feature_names == tuple("abcde") and again.config == model.config


def test_serialization_rejects_bad_documents():
    X, y = noisy_data(2)
    model, _ = train_booster(X, y, TrainConfig(n_trees=3))
    text = serialize_model(model)
    doc = json.loads(text)
    doc["version"] = "2"
    with pytest.raises(ModelFormatError):
        deserialize_model(json.dumps(doc))
    with pytest.raises(ModelFormatError):
        deserialize_model(text[: len(text) // 2])


def test_training_is_deterministic():
    X, y = noisy_data(4)
    cfg = TrainConfig(n_trees=15, max_depth=4, seed=5)
    assert serialize_model(train_booster(X, y, cfg)[0]) == serialize_model(train_booster(X, y, cfg)[0])


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 1000), depth=st.integers(1, 4), bins=st.sampled_from([0, 8, 64]))
def test_class_swap_mirrors_probabilities(seed, depth, bins):
    X, y = noisy_data(seed, n=150, d=4)
    cfg = TrainConfig(n_trees=8, max_depth=depth, n_bins=bins, learning_rate=0.3)
    p = train_booster(X, y, cfg)[0].predict_proba(X)
    q = train_booster(X, 1 - y, cfg)[0].predict_proba(X)
    np.testing.assert_allclose(p, 1 - q, atol=1e-9)


def test_positive_weight_raises_positive_scores():
    X, y = noisy_data(5)
    plain = train_booster(X, y, TrainConfig(n_trees=10))[0].predict_proba(X).mean()
    heavy = train_booster(X, y, TrainConfig(n_trees=10, positive_class_weight=4.0))[0].predict_proba(X).mean()
    assert heavy > plain


def test_logistic_baseline_cases():
    X = np.zeros((50, 3))
    y = np.r_[np.ones(10), np.zeros(40)]
    m, _ = train_logistic_baseline(X, y)
    assert np.all(m.weights == 0) and m.intercept == pytest.approx(np.log(10 / 40))
    x = np.linspace(-2, 2, 40)[:, None]
    ys = (x[:, 0] > 0.1).astype(float)
    m, trace = train_logistic_baseline(x, ys)
    assert pair_auc(m.predict_proba(x), ys) == 1.0
    assert np.all(np.diff(trace) <= 0)
    m, _ = train_logistic_baseline(x, ys, l2=1e6)
    assert np.abs(m.weights).max() < 1e-3
    text = serialize_model(m)
    assert np.array_equal(deserialize_model(text).predict_proba(x), m.predict_proba(x))
