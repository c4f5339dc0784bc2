"""Random forest and k-NN baselines."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .dataset import N_CLASSES, Dataset
from .tree import MIN_LEAF, ClassificationTree, grow_tree


class Forest:
    """Trees voting by the mean of their leaf distributions."""

    def __init__(self, trees: Sequence[ClassificationTree]):
        if not trees:
            raise ValueError("a forest needs at least one tree")
        self.trees = list(trees)

    def distribution(self, x: Sequence[float]) -> tuple[float, ...]:
        acc = [0.0] * N_CLASSES
        for t in self.trees:
            row = t.distribution(x)
            for i in range(N_CLASSES):
                acc[i] += row[i]
        n = len(self.trees)
        return tuple(a / n for a in acc)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        acc = np.zeros((len(X), N_CLASSES))
        for t in self.trees:
            acc += t.predict_proba(X)
        return acc / len(self.trees)

    def to_dict(self) -> dict:
        return {"kind": "forest", "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "Forest":
        return cls([ClassificationTree.from_dict(t) for t in d["trees"]])


def train_forest(
    train: Dataset,
    n_trees: int = 30,
    max_splits: int | None = None,
    seed: int = 0,
    *,
    bootstrap: bool = True,
    features_per_split: int | None = None,
    min_leaf: int = MIN_LEAF,
) -> Forest:
    """Bagged trees with ceil(sqrt(8)) = 3 candidate features per split by default.

    ``bootstrap=False`` together with ``features_per_split=8`` degenerates
    to plain trees.
    """
    if len(train) == 0:
        raise ValueError("cannot train on an empty dataset")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if features_per_split is None:
        features_per_split = math.ceil(math.sqrt(train.X.shape[1]))
    trees = []
    for ss in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(ss)
        if bootstrap:
            idx = rng.integers(0, len(train), size=len(train))
            X, y = train.X[idx], train.y[idx]
        else:
            X, y = train.X, train.y
        trees.append(grow_tree(X, y, max_splits=max_splits, min_leaf=min_leaf,
                               features_per_split=features_per_split, rng=rng))
    return Forest(trees)


class KNearest:
    """k-NN on z-scored features with Euclidean distance."""

    def __init__(self, X: np.ndarray, y: np.ndarray, k: int = 5, mean=None, std=None):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = int(k)
        X = np.asarray(X, dtype=float)
        self.X = X
        self.mean = X.mean(axis=0) if mean is None else np.asarray(mean, dtype=float)
        std = X.std(axis=0) if std is None else np.asarray(std, dtype=float)
        self.std = np.where(std > 0, std, 1.0)
        self.Z = (X - self.mean) / self.std
        self.y = np.asarray(y, dtype=np.int64)

    def _votes(self, Zq: np.ndarray) -> np.ndarray:
        d2 = ((Zq[:, None, :] - self.Z[None, :, :]) ** 2).sum(axis=2)
        k = min(self.k, len(self.y))
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        out = np.zeros((len(Zq), N_CLASSES))
        np.add.at(out, (np.repeat(np.arange(len(Zq)), k), self.y[nearest].ravel()), 1.0)
        return out / k

    def distribution(self, x: Sequence[float]) -> tuple[float, ...]:
        z = (np.asarray(x, dtype=float) - self.mean) / self.std
        return tuple(self._votes(z[None, :])[0].tolist())

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        Zq = (np.asarray(X, dtype=float) - self.mean) / self.std
        out = np.zeros((len(Zq), N_CLASSES))
        for a in range(0, len(Zq), 256):
            out[a:a + 256] = self._votes(Zq[a:a + 256])
        return out

    def to_dict(self) -> dict:
        return {"kind": "knn", "k": self.k, "mean": self.mean.tolist(), "std": self.std.tolist(),
                "X": self.X.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "KNearest":
        return cls(np.array(d["X"]), np.array(d["y"]), d["k"], d["mean"], d["std"])


def train_knn(train: Dataset, k: int = 5) -> KNearest:
    if len(train) == 0:
        raise ValueError("cannot train on an empty dataset")
    return KNearest(train.X, train.y, k)
