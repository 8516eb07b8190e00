"""Stratified train/test split and cross-validation folds."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError, DegenerateLabels


@dataclass
class SplitPlan:
    train: np.ndarray          # sorted row indices
    test: np.ndarray
    folds: list[np.ndarray]    # validation rows of each fold, a partition of ``train``
    seed: int

    @property
    def n_folds(self) -> int:
        return len(self.folds)

    def fold_train(self, k: int) -> np.ndarray:
        return np.setdiff1d(self.train, self.folds[k], assume_unique=True)

    def fold_of(self, n_rows: int) -> np.ndarray:
        """Fold id per row, -1 for test rows."""
        out = np.full(n_rows, -1, dtype=np.int64)
        for k, rows in enumerate(self.folds):
            out[rows] = k
        return out

    def to_dict(self) -> dict:
        return {"seed": self.seed, "train": self.train.tolist(), "test": self.test.tolist(),
                "folds": [f.tolist() for f in self.folds]}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitPlan":
        arr = lambda v: np.asarray(v, dtype=np.int64)  # noqa: E731
        return cls(arr(d["train"]), arr(d["test"]), [arr(f) for f in d["folds"]], int(d["seed"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")) + "\n")


def _class_rows(labels: np.ndarray) -> list[np.ndarray]:
    return [np.flatnonzero(labels == c) for c in (0, 1)]


def stratified_folds(rows: np.ndarray, labels: np.ndarray, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Split ``rows`` into ``k`` folds, dealing each class round-robin.

    The deal continues across classes (negatives pick up at the fold after the
    last positive), which keeps fold sizes within one of each other.
    """
    rows = np.asarray(rows, dtype=np.int64)
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("need at least 2 folds")
    if k > rows.size:
        raise DataError(f"{k} folds requested for {rows.size} rows")
    buckets: list[list[int]] = [[] for _ in range(k)]
    pos = 0
    for c in (1, 0):
        members = rows[labels == c]
        for r in members[rng.permutation(members.size)]:
            buckets[pos % k].append(int(r))
            pos += 1
    return [np.sort(np.asarray(b, dtype=np.int64)) for b in buckets]


def make_split(labels, seed: int, k: int = 5, test_fraction: float = 0.2) -> SplitPlan:
    """80/20 split stratified by class, then ``k`` stratified folds over the training rows."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or not np.all((labels == 0) | (labels == 1)):
        raise DataError("labels must be a 0/1 vector")
    if labels.size == 0 or labels.min() == labels.max():
        raise DegenerateLabels()
    if not 0 <= test_fraction < 1:
        raise ValueError("test_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for rows in _class_rows(labels):
        rows = rows[rng.permutation(rows.size)]
        n_test = min(int(np.floor(test_fraction * rows.size + 0.5)), rows.size - 1)
        test.append(rows[:n_test])
        train.append(rows[n_test:])
    train_rows = np.sort(np.concatenate(train))
    test_rows = np.sort(np.concatenate(test))
    folds = stratified_folds(train_rows, labels[train_rows], k, rng)
    return SplitPlan(train_rows, test_rows, folds, seed)
