"""Second-order regression trees grown on binned features.

A split sends ``x <= threshold`` left. Exact-greedy mode is the special case
where every distinct training value (but the largest) is a candidate edge.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# relative slack under which two split gains count as tied
GAIN_TIE_RTOL = 1e-10


def split_gain(G_left, H_left, G_right, H_right, lam, gamma=0.0):
    """Loss reduction of a split: half the sum of child scores minus the parent score, less gamma."""
    G = G_left + G_right
    H = H_left + H_right
    return 0.5 * (G_left ** 2 / (H_left + lam) + G_right ** 2 / (H_right + lam) - G ** 2 / (H + lam)) - gamma


def leaf_weight(G, H, lam, learning_rate=1.0):
    return -G / (H + lam) * learning_rate


def bin_edges(column: np.ndarray, n_bins: int) -> np.ndarray:
    """Candidate thresholds for one feature, all of them actual training values.

    ``n_bins == 0`` (or few distinct values) keeps every distinct value except
    the maximum; otherwise equal-frequency lower quantiles are used.
    """
    distinct = np.unique(column)
    if n_bins == 0 or distinct.size <= n_bins:
        return distinct[:-1]
    s = np.sort(column)
    q = np.arange(1, n_bins) / n_bins
    idx = np.ceil(q * s.size).astype(np.int64) - 1
    edges = np.unique(s[idx])
    return edges[edges < distinct[-1]]


def apply_bins(X: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    out = np.empty(X.shape, dtype=np.int64)
    for f, e in enumerate(edges):
        out[:, f] = np.searchsorted(e, X[:, f], side="left")
    return out


@dataclass
class Tree:
    feature: np.ndarray    # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.arange(X.shape[0])
        while active.size:
            f = self.feature[node[active]]
            inner = f >= 0
            active = active[inner]
            if not active.size:
                break
            nd = node[active]
            go_left = X[active, f[inner]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
        return self.value[node]

    def scaled(self, factor: float) -> "Tree":
        return Tree(self.feature, self.threshold, self.left, self.right, self.value * factor)

    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)


@dataclass
class SplitChoice:
    feature: int
    bin: int
    gain: float


class TreeGrower:
    """Grows one tree from per-row gradients/hessians on pre-binned data."""

    def __init__(self, binned: np.ndarray, edges: list[np.ndarray], max_depth: int, lam: float,
                 gamma: float, min_child_hessian: float, learning_rate: float):
        self.binned = binned
        self.edges = edges
        self.max_depth = max_depth
        self.lam = lam
        self.gamma = gamma
        self.min_child_hessian = min_child_hessian
        self.learning_rate = learning_rate
        sizes = np.array([e.size + 1 for e in edges], dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.total_bins = int(sizes.sum())
        seg = np.repeat(np.arange(len(edges)), sizes)
        self.bin_feature = seg
        self.bin_local = np.arange(self.total_bins) - self.offsets[seg]
        # the last bin of each feature has nothing to its right
        self.splittable = self.bin_local < sizes[seg] - 1
        self.flat = binned + self.offsets[None, :]

    def best_split(self, rows: np.ndarray, g: np.ndarray, h: np.ndarray) -> SplitChoice | None:
        n_feat = self.binned.shape[1]
        if n_feat == 0 or rows.size < 2:
            return None
        codes = self.flat[rows].ravel()
        gr, hr = g[rows], h[rows]
        Gh = np.bincount(codes, weights=np.repeat(gr, n_feat), minlength=self.total_bins)
        Hh = np.bincount(codes, weights=np.repeat(hr, n_feat), minlength=self.total_bins)
        Ch = np.bincount(codes, minlength=self.total_bins)
        G, H, C = gr.sum(), hr.sum(), rows.size
        GL = _segment_cumsum(Gh, self.offsets)
        HL = _segment_cumsum(Hh, self.offsets)
        CL = _segment_cumsum(Ch, self.offsets)
        GR, HR, CR = G - GL, H - HL, C - CL
        ok = (self.splittable & (CL >= 1) & (CR >= 1)
              & (HL >= self.min_child_hessian) & (HR >= self.min_child_hessian))
        if not ok.any():
            return None
        gain = np.full(self.total_bins, -np.inf)
        gain[ok] = split_gain(GL[ok], HL[ok], GR[ok], HR[ok], self.lam, self.gamma)
        best = gain.max()
        if not best > 0:
            return None
        tied = np.flatnonzero(gain >= best - GAIN_TIE_RTOL * max(1.0, abs(best)))
        k = int(tied[0])  # flat order = (feature, threshold) ascending
        return SplitChoice(int(self.bin_feature[k]), int(self.bin_local[k]), float(gain[k]))

    def grow(self, g: np.ndarray, h: np.ndarray) -> tuple[Tree, list[tuple[np.ndarray, int]]]:
        """Return the tree and (training rows, leaf node) pairs for fast score updates."""
        feature, threshold, left, right, value = [], [], [], [], []
        leaves = []

        def new_node():
            for lst, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (value, 0.0)):
                lst.append(v)
            return len(feature) - 1

        stack = [(new_node(), np.arange(g.size), 0)]
        while stack:
            node, rows, depth = stack.pop()
            choice = self.best_split(rows, g, h) if depth < self.max_depth else None
            if choice is None:
                value[node] = leaf_weight(g[rows].sum(), h[rows].sum(), self.lam, self.learning_rate)
                leaves.append((rows, node))
                continue
            mask = self.binned[rows, choice.feature] <= choice.bin
            feature[node] = choice.feature
            threshold[node] = float(self.edges[choice.feature][choice.bin])
            l_id, r_id = new_node(), new_node()
            left[node], right[node] = l_id, r_id
            # push right first so the left subtree is expanded first
            stack.append((r_id, rows[~mask], depth + 1))
            stack.append((l_id, rows[mask], depth + 1))
        tree = Tree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=float),
                    np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                    np.array(value, dtype=float))
        return tree, leaves


def _segment_cumsum(a: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    out = np.empty(a.size, dtype=float)
    bounds = np.append(offsets, a.size)
    for s, e in zip(bounds[:-1], bounds[1:]):
        out[s:e] = np.cumsum(a[s:e])
    return out
