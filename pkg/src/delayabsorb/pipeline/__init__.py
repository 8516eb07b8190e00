from .metrics import EvalReport, average_precision, compute_metrics, f_beta, roc_auc, tune_threshold
from .run import PipelineConfig, PreparedData, StageOutputs, prepare, run_pipeline, run_two_stage, save_outputs
from .search import SearchSpace, Trial, search_hyperparameters
from .split import SplitPlan, make_split, stratified_folds
from .stages import check_no_leakage, dep_del15, run_baselines, run_stage1, run_stage2

__all__ = [
    "EvalReport", "PipelineConfig", "PreparedData", "SearchSpace", "SplitPlan", "StageOutputs", "Trial",
    "average_precision", "check_no_leakage", "compute_metrics", "dep_del15", "f_beta", "make_split", "prepare",
    "roc_auc", "run_baselines", "run_pipeline", "run_stage1", "run_stage2", "run_two_stage", "save_outputs",
    "search_hyperparameters", "stratified_folds", "tune_threshold",
]
