"""Greedy Gini classification trees grown best-first under a split cap."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from ..scene import Technology
from .dataset import N_CLASSES, Dataset

MIN_LEAF = 5
_TIE_RTOL = 1e-12


@dataclass
class _Split:
    feature: int
    threshold: float
    left_idx: np.ndarray
    right_idx: np.ndarray
    # n_node * gini_parent - (n_l * gini_l + n_r * gini_r)
    gain: Fraction


def _best_split(
    X: np.ndarray,
    Y1: np.ndarray,
    idx: np.ndarray,
    features: Sequence[int],
    min_leaf: int,
) -> _Split | None:
    n = len(idx)
    if n < 2 * min_leaf:
        return None
    counts = Y1[idx].sum(axis=0)
    if np.count_nonzero(counts) <= 1:
        return None
    candidates = []
    best_score = -math.inf
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        cum = np.cumsum(Y1[idx[order]], axis=0)
        pos = np.arange(min_leaf - 1, n - min_leaf)
        if not len(pos):
            continue
        valid = xs_sorted[pos] < xs_sorted[pos + 1]
        pos = pos[valid]
        if not len(pos):
            continue
        cl = cum[pos]
        cr = counts - cl
        nl = (pos + 1).astype(float)
        nr = n - nl
        score = (cl * cl).sum(axis=1) / nl + (cr * cr).sum(axis=1) / nr
        j = int(np.argmax(score))
        candidates.append((f, pos, score, cum, xs_sorted))
        best_score = max(best_score, float(score[j]))
    if not candidates:
        return None
    # resolve float near-ties exactly: lowest feature, then lowest threshold
    parent_sq = Fraction(int((counts * counts).sum()), n)
    best = None
    for f, pos, score, cum, xs_sorted in candidates:
        near = np.flatnonzero(score >= best_score * (1 - _TIE_RTOL))
        for j in near:
            p = int(pos[j])
            cl = [int(v) for v in cum[p]]
            cr = [int(c) - v for c, v in zip(counts, cl)]
            exact = Fraction(sum(v * v for v in cl), p + 1) + Fraction(sum(v * v for v in cr), n - p - 1)
            if best is None or exact > best[0]:
                best = (exact, f, p, xs_sorted)
    exact_score, f, p, xs_sorted = best
    gain = exact_score - parent_sq
    if gain <= 0:
        return None
    thr = 0.5 * (float(xs_sorted[p]) + float(xs_sorted[p + 1]))
    if not xs_sorted[p] <= thr < xs_sorted[p + 1]:
        thr = float(xs_sorted[p])
    mask = X[idx, f] <= thr
    return _Split(f, thr, idx[mask], idx[~mask], gain)


class ClassificationTree:
    """Binary tree stored as flat arrays; leaves hold class distributions."""

    def __init__(self, feature, threshold, left, right, value, features=None):
        self.feature = list(int(v) for v in feature)
        self.threshold = list(float(v) for v in threshold)
        self.left = list(int(v) for v in left)
        self.right = list(int(v) for v in right)
        self.value = np.asarray(value, dtype=float).reshape(len(self.feature), N_CLASSES)
        self._value_rows = [tuple(r) for r in self.value.tolist()]
        self.features = tuple(features) if features is not None else None

    @property
    def split_count(self) -> int:
        return sum(1 for f in self.feature if f >= 0)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            if self.feature[node] < 0:
                best = max(best, d)
            else:
                stack.append((self.left[node], d + 1))
                stack.append((self.right[node], d + 1))
        return best

    def leaf_of(self, x: Sequence[float]) -> int:
        feature, threshold, left, right = self.feature, self.threshold, self.left, self.right
        node = 0
        while feature[node] >= 0:
            node = left[node] if x[feature[node]] <= threshold[node] else right[node]
        return node

    def leaf_with_count(self, x: Sequence[float]) -> tuple[int, int]:
        """Leaf index and the number of feature comparisons made to reach it."""
        node, comparisons = 0, 0
        while self.feature[node] >= 0:
            comparisons += 1
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return node, comparisons

    def distribution(self, x: Sequence[float]) -> tuple[float, ...]:
        return self._value_rows[self.leaf_of(x)]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        active = feat[node] >= 0
        while active.any():
            nd = node[active]
            go_left = X[np.flatnonzero(active), feat[nd]] <= thr[nd]
            node[active] = np.where(go_left, left[nd], right[nd])
            active = feat[node] >= 0
        return self.value[node]

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                nodes.append({"id": i, "feature": self.feature[i], "threshold": self.threshold[i],
                              "left": self.left[i], "right": self.right[i]})
            else:
                nodes.append({"id": i, "leaf": True,
                              "distribution": {t.name: float(self.value[i, t]) for t in Technology}})
        d = {"kind": "tree", "split_count": self.split_count, "nodes": nodes}
        if self.features is not None:
            d["features"] = list(self.features)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClassificationTree":
        nodes = sorted(d["nodes"], key=lambda n: n["id"])
        feature, threshold, left, right, value = [], [], [], [], []
        for n in nodes:
            if n.get("leaf"):
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append([float(n["distribution"].get(t.name, 0.0)) for t in Technology])
            else:
                feature.append(int(n["feature"]))
                threshold.append(float(n["threshold"]))
                left.append(int(n["left"]))
                right.append(int(n["right"]))
                value.append([0.0] * N_CLASSES)
        return cls(feature, threshold, left, right, value, d.get("features"))


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    *,
    max_splits: int | None,
    max_depth: int | None = None,
    min_leaf: int = MIN_LEAF,
    features: Sequence[int] | None = None,
    features_per_split: int | None = None,
    rng: np.random.Generator | None = None,
) -> ClassificationTree:
    """Best-first CART growth.

    The leaf with the largest total impurity reduction is split next; ties
    go to the leaf created first.  ``features_per_split`` draws a random
    feature subset for every split search (random-forest mode).
    """
    n_feat = X.shape[1]
    pool = list(range(n_feat)) if features is None else sorted(features)
    Y1 = np.zeros((len(y), N_CLASSES), dtype=np.int64)
    Y1[np.arange(len(y)), y] = 1

    feature, threshold, left, right, value, depth = [], [], [], [], [], []

    def new_node(idx: np.ndarray, d: int) -> int:
        counts = Y1[idx].sum(axis=0)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(counts / counts.sum())
        depth.append(d)
        return len(feature) - 1

    def search(idx: np.ndarray, d: int) -> _Split | None:
        if max_depth is not None and d >= max_depth:
            return None
        feats = pool
        if features_per_split is not None and features_per_split < len(pool):
            feats = sorted(rng.choice(pool, size=features_per_split, replace=False).tolist())
        return _best_split(X, Y1, idx, feats, min_leaf)

    root_idx = np.arange(len(y))
    heap: list = []
    root = new_node(root_idx, 0)
    sp = search(root_idx, 0)
    if sp is not None:
        heapq.heappush(heap, (-sp.gain, root, sp))
    splits = 0
    cap = math.inf if max_splits is None else max_splits
    while heap and splits < cap:
        _, node, sp = heapq.heappop(heap)
        feature[node] = sp.feature
        threshold[node] = sp.threshold
        splits += 1
        for side, child_idx in (("l", sp.left_idx), ("r", sp.right_idx)):
            c = new_node(child_idx, depth[node] + 1)
            if side == "l":
                left[node] = c
            else:
                right[node] = c
            csp = search(child_idx, depth[node] + 1)
            if csp is not None:
                heapq.heappush(heap, (-csp.gain, c, csp))
    return ClassificationTree(feature, threshold, left, right, np.array(value),
                              None if features is None else pool)


def train_tree(
    train: Dataset,
    max_splits: int | None = 20,
    seed: int = 0,
    *,
    max_depth: int | None = None,
    min_leaf: int = MIN_LEAF,
    features: Sequence[int] | None = None,
) -> ClassificationTree:
    """Train a single depth- or split-capped tree; ``seed`` is unused but kept for a uniform API."""
    if len(train) == 0:
        raise ValueError("cannot train on an empty dataset")
    if max_splits is not None and max_splits < 0:
        raise ValueError("max_splits must be >= 0")
    return grow_tree(train.X, train.y, max_splits=max_splits, max_depth=max_depth,
                     min_leaf=min_leaf, features=features)
