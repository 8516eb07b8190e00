import json

import numpy as np
import pytest

from delayabsorb.errors import DataError, LeakageError
from delayabsorb.ingest import load_dataset
from delayabsorb.learner import TrainConfig, serialize_model
from delayabsorb.pipeline import PipelineConfig, compute_metrics, make_split, prepare, run_two_stage, save_outputs
from delayabsorb.pipeline.run import apply_models, evaluation_document
from delayabsorb.pipeline.stages import (SCORE_NOTHING_TO_ABSORB, SCORE_UNCHAINED, SOURCE_FINAL, SOURCE_NO_DELAY,
                                         SOURCE_OOF, SOURCE_UNCHAINED, FoldRecord, balanced_pos_weight,
                                         check_no_leakage, dep_del15, run_baselines, run_stage1, run_stage2)

FAST = TrainConfig(n_trees=20, max_depth=3, learning_rate=0.3)


def test_dep_del15_is_strict():
    assert dep_del15([14, 15, 16, -3]).tolist() == [0, 0, 1, 0]


def test_leakage_check():
    good = [FoldRecord(0, np.array([2, 3]), np.array([0, 1])), FoldRecord(1, np.array([0, 1]), np.array([2, 3]))]
    check_no_leakage(good, np.arange(4))
    bad = [FoldRecord(0, np.array([1, 2, 3]), np.array([0, 1])), FoldRecord(1, np.array([0, 1]), np.array([2, 3]))]
    with pytest.raises(LeakageError, match="fold 0"):
        check_no_leakage(bad, np.arange(4))
    with pytest.raises(LeakageError):
        check_no_leakage(good[:1], np.arange(4))


def stage1_inputs(n=300, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 4))
    absorbed = (X[:, 0] > 0).astype(int)
    prev_delay = rng.integers(-10, 60, n)
    has_link = rng.random(n) > 0.1
    eligible = has_link & (prev_delay > 0)
    y2 = (X[:, 1] + rng.normal(size=n) > 0.5).astype(int)
    return X, absorbed, eligible, has_link, prev_delay, make_split(y2, seed)


def test_stage1_scores_sources_and_defaults():
    X, absorbed, eligible, has_link, prev_delay, plan = stage1_inputs()
    res = run_stage1(X, absorbed, eligible, plan, FAST, has_link=has_link)
    for i in range(X.shape[0]):
        if not has_link[i]:
            assert res.scores[i] == SCORE_UNCHAINED and res.source[i] == SOURCE_UNCHAINED
        elif prev_delay[i] <= 0:
            assert res.scores[i] == SCORE_NOTHING_TO_ABSORB and res.source[i] == SOURCE_NO_DELAY
    train_elig = set(plan.train[eligible[plan.train]].tolist())
    assert {i for i, s in enumerate(res.source) if s == SOURCE_OOF} == train_elig
    assert {i for i, s in enumerate(res.source) if s == SOURCE_FINAL} == set(plan.test[eligible[plan.test]].tolist())
    for rec in res.folds:
        assert not set(rec.train_rows.tolist()) & set(rec.scored_rows.tolist())
        assert set(rec.train_rows.tolist()) <= train_elig
    assert res.reports["cv@0.5"].roc_auc > 0.95
    assert "test@tuned" in res.reports


def test_negative_inherited_delay_stays_out_of_stage1():
    X, absorbed, eligible, has_link, prev_delay, plan = stage1_inputs()
    i = int(plan.train[0])
    prev_delay[i], has_link[i] = -3, True
    eligible[i] = False
    res = run_stage1(X, absorbed, eligible, plan, FAST, has_link=has_link)
    assert res.scores[i] == 1.0 and i not in res.oof_rows
    assert all(i not in rec.train_rows for rec in res.folds)


def test_stage1_thread_invariance():
    X, absorbed, eligible, has_link, _, plan = stage1_inputs()
    a = run_stage1(X, absorbed, eligible, plan, FAST, has_link=has_link, threads=1)
    b = run_stage1(X, absorbed, eligible, plan, FAST, has_link=has_link, threads=4)
    assert np.array_equal(a.scores, b.scores)
    assert serialize_model(a.model) == serialize_model(b.model)


def test_stage1_empty_population():
    X, absorbed, _, has_link, _, plan = stage1_inputs()
    with pytest.raises(DataError, match="empty Stage I population"):
        run_stage1(X, absorbed, np.zeros(X.shape[0], bool), plan, FAST)


def test_stage2_weighting_and_reports():
    X, _, _, _, _, plan = stage1_inputs()
    y = (X[:, 1] > 0.8).astype(int)
    plan = make_split(y, 1)
    res = run_stage2(X, y, plan, FAST)
    assert res.pos_weight == pytest.approx(balanced_pos_weight(y[plan.train]))
    assert res.model.config.positive_class_weight == res.pos_weight
    assert set(res.reports) == {"cv@0.5", "cv@tuned", "test@0.5", "test@tuned"}
    assert res.reports["test@tuned"].threshold == res.threshold
    assert run_stage2(X, y, plan, FAST, pos_weight=1.0, tune=False).pos_weight == 1.0


def test_xor_defeats_linear_baseline_but_not_trees():
    # mirrored copies leave no linear signal in the population
    P = np.random.default_rng(0).uniform(-1, 1, size=(1000, 2))
    X = np.vstack([P, -P, P * [-1, 1], P * [1, -1]])
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int)
    plan = make_split(y, 0)
    res = run_baselines(X, y, plan, TrainConfig(n_trees=40, max_depth=3, learning_rate=0.3))
    assert abs(res.reports["logistic@0.5"].roc_auc - 0.5) < 0.06
    assert res.reports["single_stage@0.5"].roc_auc > 0.9


@pytest.fixture(scope="module")
def pipeline_run(small_network_dir):
    ds = load_dataset(small_network_dir)
    cfg = PipelineConfig(stage1=FAST, stage2=FAST, seed=2)
    return ds, cfg, run_two_stage(prepare(ds.joined, cfg), cfg)


def test_prepared_state_is_fit_on_training_rows(pipeline_run):
    ds, cfg, out = pipeline_run
    prep = out.data
    train = set(prep.plan.train.tolist())
    counted = sum(s.n_samples for s in prep.buffers.values())
    n_train_links = sum(1 for i in train if prep.links[i] is not None and not prep.links[i].overnight)
    assert counted == n_train_links
    assert prep.X.shape == (len(ds.joined), len(prep.names))


def test_stage_outputs_documents(pipeline_run, tmp_path):
    _, cfg, out = pipeline_run
    doc = evaluation_document(out)
    assert [r["model"] for r in doc["table1_test"]] == ["logistic_regression", "single_stage_booster", "two_stage"]
    assert [r["setting"] for r in doc["table2_test"]] == ["default", "F1-optimal"]
    assert doc["leakage_check"] == "passed"
    paths = save_outputs(out, tmp_path)
    assert all(p.exists() for p in paths.values())
    header = (tmp_path / "scores.csv").read_text().splitlines()[0]
    assert header.startswith("row_key,split,fold,absorb_score")
    assert json.loads((tmp_path / "evaluation.json").read_text()) == json.loads(json.dumps(doc))


def test_apply_models_reuses_training_state(pipeline_run):
    ds, cfg, out = pipeline_run
    prep = out.data
    scored = apply_models(ds.joined, out.stage1.model, out.stage2.model, prep.encoder, prep.buffers)
    test = prep.plan.test
    np.testing.assert_array_equal(scored.stage2_prob[test], out.stage2.scores[test])
    np.testing.assert_array_equal(scored.absorb_score[test], out.stage1.scores[test])
    assert compute_metrics(scored.stage2_prob[test], scored.y2[test]).roc_auc == \
        out.stage2.reports["test@0.5"].roc_auc


def test_config_round_trip():
    cfg = PipelineConfig(stage1=FAST, beta=2.0, pos_weight=3.0, seed=9)
    assert PipelineConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
