"""Stage I (absorption probability) and Stage II (DepDel15) training over a fixed split.

Stage I scores every training row out of fold: a row's AbsorbScore always
comes from a model that never saw it. Test rows are scored by a final model
fit on all eligible training rows.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import DataError, LeakageError
from ..learner import LinearModel, TrainConfig, train_booster, train_logistic_baseline
from .metrics import EvalReport, compute_metrics, tune_threshold
from .split import SplitPlan, stratified_folds

DEP_DELAY_THRESHOLD_MIN = 15
SCORE_NOTHING_TO_ABSORB = 1.0
SCORE_UNCHAINED = 0.5

# how each row's AbsorbScore was produced
SOURCE_OOF = "oof"
SOURCE_FINAL = "final_model"
SOURCE_NO_DELAY = "default_no_inherited_delay"
SOURCE_OVERNIGHT = "default_overnight"
SOURCE_UNCHAINED = "default_unchained"


def dep_del15(dep_delay_min) -> np.ndarray:
    """Stage II label: strictly more than 15 minutes late."""
    return (np.asarray(dep_delay_min) > DEP_DELAY_THRESHOLD_MIN).astype(np.int64)


@dataclass
class FoldRecord:
    """Rows a fold model trained on and rows it scored."""
    fold: int
    train_rows: np.ndarray
    scored_rows: np.ndarray


def check_no_leakage(records: list[FoldRecord], oof_rows: np.ndarray) -> None:
    """Every out-of-fold row is scored exactly once, by a fold that did not train on it."""
    seen = np.concatenate([r.scored_rows for r in records]) if records else np.empty(0, np.int64)
    for r in records:
        overlap = np.intersect1d(r.train_rows, r.scored_rows)
        if overlap.size:
            raise LeakageError(f"fold {r.fold} scored {overlap.size} of its own training rows (first {overlap[0]})")
    if seen.size != np.unique(seen).size:
        raise LeakageError("a row received more than one out-of-fold score")
    if not np.array_equal(np.sort(seen), np.sort(oof_rows)):
        raise LeakageError("out-of-fold rows do not match the eligible training rows")


def _fit_folds(X, y, rows, folds, config, names, threads):
    """Train one model per fold on ``rows`` minus the fold; return (records, models)."""
    def fit(k):
        tr = np.setdiff1d(rows, folds[k], assume_unique=True)
        model, _ = train_booster(X[tr], y[tr], config, names)
        return FoldRecord(k, tr, folds[k]), model

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            out = list(pool.map(fit, range(len(folds))))
    else:
        out = [fit(k) for k in range(len(folds))]
    return [o[0] for o in out], [o[1] for o in out]


@dataclass
class Stage1Result:
    model: object
    scores: np.ndarray          # AbsorbScore for every row
    source: list[str]
    oof_rows: np.ndarray        # eligible training rows, scored out of fold
    test_rows: np.ndarray       # eligible test rows, scored by the final model
    folds: list[FoldRecord]
    threshold: float
    reports: dict[str, EvalReport] = field(default_factory=dict)


def run_stage1(X: np.ndarray, absorbed, eligible, plan: SplitPlan, config: TrainConfig, *,
               has_link=None, overnight=None, feature_names=None, n_folds: int | None = None,
               beta: float = 1.0, threads: int = 1) -> Stage1Result:
    """Out-of-fold AbsorbScores for eligible training rows plus a final model for the rest.

    ``absorbed`` is read only where ``eligible`` holds. Rows outside the
    population get 1.0 when there was no inherited delay (or the link is an
    overnight one) and 0.5 when the flight has no predecessor.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    eligible = np.asarray(eligible, dtype=bool)
    y = np.where(eligible, np.asarray(absorbed), 0).astype(np.int64)
    has_link = np.ones(n, bool) if has_link is None else np.asarray(has_link, dtype=bool)
    overnight = np.zeros(n, bool) if overnight is None else np.asarray(overnight, dtype=bool)

    train_rows = plan.train[eligible[plan.train]]
    test_rows = plan.test[eligible[plan.test]]
    if train_rows.size == 0:
        raise DataError("empty Stage I population")
    k = n_folds or plan.n_folds
    folds = stratified_folds(train_rows, y[train_rows], k, np.random.default_rng([plan.seed, 1]))
    records, models = _fit_folds(X, y, train_rows, folds, config, feature_names, threads)

    scores = np.where(has_link, SCORE_NOTHING_TO_ABSORB, SCORE_UNCHAINED).astype(float)
    source = [SOURCE_NO_DELAY if has_link[i] else SOURCE_UNCHAINED for i in range(n)]
    for i in np.flatnonzero(overnight & has_link):
        source[i] = SOURCE_OVERNIGHT
    for rec, m in zip(records, models):
        scores[rec.scored_rows] = m.predict_proba(X[rec.scored_rows])
        for i in rec.scored_rows:
            source[i] = SOURCE_OOF
    check_no_leakage(records, train_rows)

    final, _ = train_booster(X[train_rows], y[train_rows], config, feature_names)
    rest = np.flatnonzero(eligible)
    rest = rest[~np.isin(rest, train_rows)]
    if rest.size:
        scores[rest] = final.predict_proba(X[rest])
        for i in rest:
            source[i] = SOURCE_FINAL

    oof_scores, oof_y = scores[train_rows], y[train_rows]
    threshold = 0.5
    reports = {"cv@0.5": compute_metrics(oof_scores, oof_y, 0.5)}
    if 0 < oof_y.sum() < oof_y.size:
        threshold, _ = tune_threshold(oof_scores, oof_y, beta)
        reports["cv@tuned"] = compute_metrics(oof_scores, oof_y, threshold)
    if test_rows.size:
        ty = y[test_rows]
        reports["test@0.5"] = compute_metrics(scores[test_rows], ty, 0.5)
        reports["test@tuned"] = compute_metrics(scores[test_rows], ty, threshold)
    return Stage1Result(final, scores, source, train_rows, test_rows, records, threshold, reports)


def balanced_pos_weight(y) -> float:
    y = np.asarray(y)
    pos = int(y.sum())
    if pos == 0 or pos == y.size:
        raise DataError("cannot weight classes: a class is missing")
    return (y.size - pos) / pos


@dataclass
class Stage2Result:
    model: object
    scores: np.ndarray          # test rows: final model; training rows: out-of-fold (when tuned) else in-sample
    threshold: float
    pos_weight: float
    reports: dict[str, EvalReport] = field(default_factory=dict)


def _two_reports(prefix, scores, y, threshold, reports):
    reports[f"{prefix}@0.5"] = compute_metrics(scores, y, 0.5)
    reports[f"{prefix}@tuned"] = compute_metrics(scores, y, threshold)


def run_stage2(X: np.ndarray, y, plan: SplitPlan, config: TrainConfig, *, pos_weight: float | None = None,
               feature_names=None, tune: bool = True, beta: float = 1.0, threads: int = 1) -> Stage2Result:
    """Weighted DepDel15 booster; the threshold is tuned on out-of-fold training scores."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(np.int64)
    w = balanced_pos_weight(y[plan.train]) if pos_weight is None else float(pos_weight)
    cfg = replace(config, positive_class_weight=w)
    scores = np.zeros(X.shape[0])
    threshold = 0.5
    reports: dict[str, EvalReport] = {}
    if tune:
        records, models = _fit_folds(X, y, plan.train, plan.folds, cfg, feature_names, threads)
        for rec, m in zip(records, models):
            scores[rec.scored_rows] = m.predict_proba(X[rec.scored_rows])
        check_no_leakage(records, plan.train)
        threshold, _ = tune_threshold(scores[plan.train], y[plan.train], beta)
        _two_reports("cv", scores[plan.train], y[plan.train], threshold, reports)
    model, _ = train_booster(X[plan.train], y[plan.train], cfg, feature_names)
    if not tune:
        scores[plan.train] = model.predict_proba(X[plan.train])
    if plan.test.size:
        scores[plan.test] = model.predict_proba(X[plan.test])
        _two_reports("test", scores[plan.test], y[plan.test], threshold, reports)
    return Stage2Result(model, scores, threshold, w, reports)


@dataclass
class BaselineResult:
    logistic: LinearModel
    booster: object
    logistic_scores: np.ndarray   # test rows
    booster_scores: np.ndarray
    reports: dict[str, EvalReport]


def standardize(X: np.ndarray, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = X[rows].mean(axis=0)
    sd = X[rows].std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (X - mean) / sd, mean, sd


def run_baselines(X: np.ndarray, y, plan: SplitPlan, config: TrainConfig, *, pos_weight: float | None = None,
                  feature_names=None, logistic_l2: float = 1e-3, logistic_epochs: int = 300) -> BaselineResult:
    """Logistic regression on standardized features and a single-stage booster, same split."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(np.int64)
    Z, _, _ = standardize(X, plan.train)
    lin, _ = train_logistic_baseline(Z[plan.train], y[plan.train], l2=logistic_l2, epochs=logistic_epochs,
                                     feature_names=feature_names)
    w = balanced_pos_weight(y[plan.train]) if pos_weight is None else float(pos_weight)
    booster, _ = train_booster(X[plan.train], y[plan.train], replace(config, positive_class_weight=w),
                               feature_names)
    ls = lin.predict_proba(Z[plan.test])
    bs = booster.predict_proba(X[plan.test])
    yt = y[plan.test]
    reports = {"logistic@0.5": compute_metrics(ls, yt, 0.5), "single_stage@0.5": compute_metrics(bs, yt, 0.5)}
    return BaselineResult(lin, booster, ls, bs, reports)
