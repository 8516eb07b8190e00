"""Versioned JSON documents for boosters and linear baselines.

Python's float repr is the shortest decimal string that parses back to the
same binary64, so thresholds, leaf values and weights round-trip exactly.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .booster import BoosterModel, TrainConfig
from .linear import LinearModel
from .tree import Tree

FORMAT_VERSION = "1"
BOOSTER_FORMAT = "delayabsorb.booster"
LINEAR_FORMAT = "delayabsorb.linear"


class ModelFormatError(ValueError):
    pass


def _floats(a) -> list[float]:
    return [float(v) for v in a]


def serialize_model(model) -> str:
    if isinstance(model, BoosterModel):
        doc = {
            "format": BOOSTER_FORMAT,
            "version": FORMAT_VERSION,
            "base_score": float(model.base_score),
            "config": model.config.to_dict(),
            "feature_names": list(model.feature_names),
            "step_scales": _floats(model.step_scales),
            "trees": [{
                "feature": [int(v) for v in t.feature],
                "threshold": _floats(t.threshold),
                "left": [int(v) for v in t.left],
                "right": [int(v) for v in t.right],
                "value": _floats(t.value),
            } for t in model.trees],
        }
    elif isinstance(model, LinearModel):
        doc = {
            "format": LINEAR_FORMAT,
            "version": FORMAT_VERSION,
            "intercept": float(model.intercept),
            "weights": _floats(model.weights),
            "feature_names": list(model.feature_names),
            "l2": float(model.l2),
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def _tree_from(doc: dict, n_features: int) -> Tree:
    t = Tree(np.array(doc["feature"], dtype=np.int64), np.array(doc["threshold"], dtype=float),
             np.array(doc["left"], dtype=np.int64), np.array(doc["right"], dtype=np.int64),
             np.array(doc["value"], dtype=float))
    n = t.feature.size
    if n == 0 or not (t.threshold.size == t.left.size == t.right.size == t.value.size == n):
        raise ModelFormatError("tree arrays have inconsistent lengths")
    inner = t.feature >= 0
    if np.any(t.feature[inner] >= n_features):
        raise ModelFormatError("tree references a feature outside the model width")
    kids = np.concatenate([t.left[inner], t.right[inner]])
    if np.any(kids <= 0) or np.any(kids >= n):
        raise ModelFormatError("tree child index out of range")
    return t


def deserialize_model(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"truncated or invalid model document: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be an object")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {doc.get('version')!r}")
    try:
        names = tuple(doc["feature_names"])
        if doc.get("format") == BOOSTER_FORMAT:
            return BoosterModel(
                base_score=float(doc["base_score"]),
                trees=[_tree_from(t, len(names)) for t in doc["trees"]],
                config=TrainConfig.from_dict(doc["config"]),
                feature_names=names,
                step_scales=[float(v) for v in doc.get("step_scales", [])],
            )
        if doc.get("format") == LINEAR_FORMAT:
            w = np.array(doc["weights"], dtype=float)
            if w.size != len(names):
                raise ModelFormatError("weight count does not match feature names")
            return LinearModel(w, float(doc["intercept"]), names, float(doc["l2"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed model document: {exc}") from exc
    raise ModelFormatError(f"unknown model format {doc.get('format')!r}")


def save_model(model, path) -> None:
    Path(path).write_text(serialize_model(model), encoding="utf-8")


def load_model(path):
    return deserialize_model(Path(path).read_text(encoding="utf-8"))
