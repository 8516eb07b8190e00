from .booster import BoosterModel, TrainConfig, logistic, predict_proba, train_booster, weighted_log_loss
from .linear import LinearModel, train_logistic_baseline
from .serialize import ModelFormatError, deserialize_model, load_model, save_model, serialize_model

__all__ = [
    "BoosterModel", "LinearModel", "ModelFormatError", "TrainConfig", "deserialize_model", "load_model",
    "logistic", "predict_proba", "save_model", "serialize_model", "train_booster",
    "train_logistic_baseline", "weighted_log_loss",
]
