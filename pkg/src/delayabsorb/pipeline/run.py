"""End-to-end two-stage run over a cleaned, weather-joined flight set."""
from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..absorption import BufferTable, compute_buffer_stats, is_label_eligible, label_link, write_buffer_stats
from ..features import ABSORB_SCORE, EncoderState, build_matrix, fit_encoders
from ..ingest import JoinedFlight
from ..learner import TrainConfig, save_model
from ..rotation import OVERNIGHT_MIN, RotationLink, chain_rotations
from .search import search_hyperparameters
from .split import SplitPlan, make_split
from .stages import (SCORE_NOTHING_TO_ABSORB, SCORE_UNCHAINED, SOURCE_FINAL, SOURCE_NO_DELAY,
                     SOURCE_OVERNIGHT, SOURCE_UNCHAINED, BaselineResult, Stage1Result, Stage2Result, dep_del15,
                     run_baselines, run_stage1, run_stage2)


@dataclass(frozen=True)
class PipelineConfig:
    stage1: TrainConfig = field(default_factory=TrainConfig)
    stage2: TrainConfig = field(default_factory=TrainConfig)
    beta: float = 1.0
    pos_weight: float | None = None    # None: negatives / positives on the training rows
    buffer_floor: int = 5
    join_window_min: float = 120.0
    overnight_min: int = OVERNIGHT_MIN
    n_folds: int = 5
    test_fraction: float = 0.2
    seed: int = 0
    threads: int = 1
    search_trials: int = 0
    baselines: bool = True
    tune_stage2: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stage1"], d["stage2"] = self.stage1.to_dict(), self.stage2.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        kw = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        for stage in ("stage1", "stage2"):
            if stage in kw:
                kw[stage] = TrainConfig.from_dict(kw[stage])
        return cls(**kw)


@dataclass
class PreparedData:
    joined: list[JoinedFlight]
    links: list[RotationLink | None]   # per row, the inbound link or None
    keys: list[str]
    dep_delay: np.ndarray
    y2: np.ndarray
    absorbed: np.ndarray               # Stage I label, 0 where not eligible
    eligible: np.ndarray
    has_link: np.ndarray
    overnight: np.ndarray
    plan: SplitPlan
    buffers: BufferTable
    encoder: EncoderState
    X: np.ndarray                      # Stage I / baseline features (no AbsorbScore)
    names: tuple[str, ...]


def prepare(joined: Sequence[JoinedFlight], cfg: PipelineConfig) -> PreparedData:
    """Chain, split, fit buffers and encoders on the training rows, then encode all rows."""
    joined = list(joined)
    if not joined:
        raise ValueError("no flights to model")
    flights = [j.flight for j in joined]
    chain = chain_rotations(flights, cfg.overnight_min)
    by_row = {l.curr_leg.row: l for l in chain.links}
    links = [by_row.get(f.row) for f in flights]
    dep_delay = np.array([f.dep_delay_min for f in flights], dtype=float)
    y2 = dep_del15(dep_delay)
    plan = make_split(y2, cfg.seed, cfg.n_folds, cfg.test_fraction)

    train_links = [links[i] for i in plan.train if links[i] is not None]
    buffers = compute_buffer_stats(train_links, cfg.buffer_floor)
    eligible = np.array([l is not None and is_label_eligible(l) for l in links])
    absorbed = np.array([int(label_link(l, buffers).absorbed) if e else 0 for l, e in zip(links, eligible)])
    has_link = np.array([l is not None for l in links])
    overnight = np.array([l is not None and l.overnight for l in links])

    encoder = fit_encoders([joined[i] for i in plan.train], [links[i] for i in plan.train])
    X, names = build_matrix(joined, links, encoder)
    return PreparedData(joined, links, [f.key for f in flights], dep_delay, y2, absorbed, eligible, has_link,
                        overnight, plan, buffers, encoder, X, names)


@dataclass
class StageOutputs:
    config: PipelineConfig
    data: PreparedData
    stage1: Stage1Result
    stage2: Stage2Result
    baselines: BaselineResult | None
    stage1_config: TrainConfig
    stage2_config: TrainConfig
    search_log: dict = field(default_factory=dict)

    @property
    def stage2_matrix(self) -> np.ndarray:
        return np.column_stack([self.data.X, self.stage1.scores])


def run_two_stage(prep: PreparedData, cfg: PipelineConfig) -> StageOutputs:
    plan = prep.plan
    s1_cfg, s2_cfg = cfg.stage1, cfg.stage2
    search_log = {}
    if cfg.search_trials:
        rows = plan.train[prep.eligible[plan.train]]
        s1_cfg, trials = search_hyperparameters(prep.X, prep.absorbed, rows, cfg.search_trials, cfg.seed,
                                                base=cfg.stage1, n_folds=cfg.n_folds,
                                                feature_names=prep.names, threads=cfg.threads)
        search_log["stage1"] = [t.as_dict() for t in trials]
    s1 = run_stage1(prep.X, prep.absorbed, prep.eligible, plan, s1_cfg, has_link=prep.has_link,
                    overnight=prep.overnight, feature_names=prep.names, beta=cfg.beta, threads=cfg.threads)
    X2 = np.column_stack([prep.X, s1.scores])
    names2 = prep.names + (ABSORB_SCORE,)
    if cfg.search_trials:
        s2_cfg, trials = search_hyperparameters(X2, prep.y2, plan.train, cfg.search_trials, cfg.seed + 1,
                                                base=cfg.stage2, n_folds=cfg.n_folds,
                                                feature_names=names2, threads=cfg.threads)
        search_log["stage2"] = [t.as_dict() for t in trials]
    s2 = run_stage2(X2, prep.y2, plan, s2_cfg, pos_weight=cfg.pos_weight, feature_names=names2,
                    tune=cfg.tune_stage2, beta=cfg.beta, threads=cfg.threads)
    base = None
    if cfg.baselines:
        base = run_baselines(prep.X, prep.y2, plan, s2_cfg, pos_weight=cfg.pos_weight, feature_names=prep.names)
    return StageOutputs(cfg, prep, s1, s2, base, s1_cfg, s2_cfg, search_log)


def run_pipeline(joined: Sequence[JoinedFlight], cfg: PipelineConfig) -> StageOutputs:
    return run_two_stage(prepare(joined, cfg), cfg)


def _report_rows(reports: dict) -> dict:
    return {k: v.as_dict() for k, v in sorted(reports.items())}


def evaluation_document(out: StageOutputs) -> dict:
    """Everything shaped like the comparison table and the threshold table, plus stage detail."""
    prep, s1, s2 = out.data, out.stage1, out.stage2
    two = s2.reports.get("test@0.5")
    table1 = []
    if out.baselines is not None:
        for name, key in (("logistic_regression", "logistic@0.5"), ("single_stage_booster", "single_stage@0.5")):
            r = out.baselines.reports[key]
            table1.append({"model": name, "accuracy": r.accuracy, "roc_auc": r.roc_auc})
    if two is not None:
        table1.append({"model": "two_stage", "accuracy": two.accuracy, "roc_auc": two.roc_auc})
    label = "F1-optimal" if out.config.beta == 1 else f"F{out.config.beta:g}-optimal"

    def table2(prefix):
        rows = []
        for suffix, name in (("0.5", "default"), ("tuned", label)):
            r = s2.reports.get(f"{prefix}@{suffix}")
            if r is not None:
                rows.append({"setting": name, **r.as_dict()})
        return rows

    return {
        "table1_test": table1,
        "table2_test": table2("test"),
        "table2_cv": table2("cv"),
        "stage1": {"threshold": s1.threshold, "reports": _report_rows(s1.reports),
                   "n_oof": int(s1.oof_rows.size), "n_test_scored": int(s1.test_rows.size),
                   "score_sources": dict(sorted(Counter(s1.source).items()))},
        "stage2": {"threshold": s2.threshold, "pos_weight": s2.pos_weight, "reports": _report_rows(s2.reports)},
        "baselines": _report_rows(out.baselines.reports) if out.baselines is not None else {},
        "leakage_check": "passed",
        "counts": {"rows": len(prep.keys), "train": int(prep.plan.train.size), "test": int(prep.plan.test.size),
                   "stage1_eligible": int(prep.eligible.sum()), "dep_del15": int(prep.y2.sum()),
                   "chained": int(prep.has_link.sum())},
        "configs": {"pipeline": out.config.to_dict(), "stage1": out.stage1_config.to_dict(),
                    "stage2": out.stage2_config.to_dict()},
    }


SCORE_COLUMNS = ["row_key", "split", "fold", "absorb_score", "absorb_score_source", "stage2_prob",
                 "dep_del15", "delay_absorbed"]


def write_scores(out: StageOutputs, path) -> None:
    prep = out.data
    fold = prep.plan.fold_of(len(prep.keys))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for i, key in enumerate(prep.keys):
            w.writerow([key, "test" if fold[i] < 0 else "train", int(fold[i]), repr(float(out.stage1.scores[i])),
                        out.stage1.source[i], repr(float(out.stage2.scores[i])), int(prep.y2[i]),
                        int(prep.absorbed[i]) if prep.eligible[i] else ""])


def save_outputs(out: StageOutputs, directory) -> dict[str, Path]:
    """Persist models, scores, the evaluation document and the fitted preprocessing state."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {name: d / name for name in ("stage1_model.json", "stage2_model.json", "scores.csv",
                                         "evaluation.json", "encoder.json", "buffer_stats.csv",
                                         "buffer_stats.json", "split.json")}
    save_model(out.stage1.model, paths["stage1_model.json"])
    save_model(out.stage2.model, paths["stage2_model.json"])
    write_scores(out, paths["scores.csv"])
    doc = evaluation_document(out)
    paths["evaluation.json"].write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    out.data.encoder.save(paths["encoder.json"])
    write_buffer_stats(out.data.buffers, paths["buffer_stats.csv"])
    paths["buffer_stats.json"].write_text(json.dumps(out.data.buffers.as_dict(), indent=1, sort_keys=True) + "\n")
    out.data.plan.save(paths["split.json"])
    if out.search_log:
        paths["search_trials.json"] = d / "search_trials.json"
        paths["search_trials.json"].write_text(json.dumps(out.search_log, indent=1, sort_keys=True) + "\n")
    return paths



@dataclass
class ScoredFlights:
    keys: list[str]
    absorb_score: np.ndarray
    source: list[str]
    stage2_prob: np.ndarray
    y2: np.ndarray
    absorbed: np.ndarray
    eligible: np.ndarray


def apply_models(joined: Sequence[JoinedFlight], stage1_model, stage2_model, encoder: EncoderState,
                 buffers: BufferTable, overnight_min: int = OVERNIGHT_MIN) -> ScoredFlights:
    """Score new flights with trained models and the preprocessing state fitted at training time."""
    joined = list(joined)
    flights = [j.flight for j in joined]
    by_row = {l.curr_leg.row: l for l in chain_rotations(flights, overnight_min).links}
    links = [by_row.get(f.row) for f in flights]
    X, _ = build_matrix(joined, links, encoder)
    eligible = np.array([l is not None and is_label_eligible(l) for l in links], dtype=bool)
    absorbed = np.array([int(label_link(l, buffers).absorbed) if e else 0 for l, e in zip(links, eligible)])
    score = np.full(len(joined), SCORE_NOTHING_TO_ABSORB)
    source = []
    for i, l in enumerate(links):
        if l is None:
            score[i] = SCORE_UNCHAINED
            source.append(SOURCE_UNCHAINED)
        else:
            source.append(SOURCE_FINAL if eligible[i] else SOURCE_OVERNIGHT if l.overnight else SOURCE_NO_DELAY)
    if eligible.any():
        score[eligible] = stage1_model.predict_proba(X[eligible])
    prob = stage2_model.predict_proba(np.column_stack([X, score])) if joined else np.empty(0)
    y2 = dep_del15([f.dep_delay_min for f in flights])
    return ScoredFlights([f.key for f in flights], score, source, prob, y2, absorbed, eligible)
