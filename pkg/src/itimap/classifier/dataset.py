from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..bursts import FeatureVector, LabeledBurst
from ..scene import Technology

N_CLASSES = len(Technology)


@dataclass
class Dataset:
    """Feature matrix (n x 8) with integer Technology labels."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=float).reshape(-1, 8)
        self.y = np.asarray(self.y, dtype=np.int64)
        if len(self.X) != len(self.y):
            raise ValueError("feature and label counts differ")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("dataset contains non-finite feature values")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= N_CLASSES):
            raise ValueError("labels outside the technology set")

    @classmethod
    def from_rows(cls, rows: Sequence[LabeledBurst]) -> "Dataset":
        if not rows:
            return cls(np.zeros((0, 8)), np.zeros(0, dtype=np.int64))
        return cls(np.stack([r.features.as_array() for r in rows]), np.array([int(r.label) for r in rows]))

    def rows(self) -> list[LabeledBurst]:
        return [LabeledBurst(FeatureVector.from_array(x), Technology(int(t))) for x, t in zip(self.X, self.y)]

    def __len__(self) -> int:
        return len(self.y)

    @property
    def classes(self) -> tuple[Technology, ...]:
        return tuple(Technology(int(c)) for c in np.unique(self.y))

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx])

    def class_counts(self) -> dict[Technology, int]:
        return {t: int(np.sum(self.y == t)) for t in Technology if np.any(self.y == t)}


def stratified_split(data: Dataset, train_fraction: float = 0.7, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Per-class shuffled split; each class contributes round(fraction * n_c) rows to train."""
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in np.unique(data.y):
        idx = np.flatnonzero(data.y == c)
        idx = idx[rng.permutation(len(idx))]
        k = int(round(train_fraction * len(idx)))
        train_idx.append(idx[:k])
        test_idx.append(idx[k:])
    tr = np.sort(np.concatenate(train_idx)) if train_idx else np.zeros(0, dtype=np.int64)
    te = np.sort(np.concatenate(test_idx)) if test_idx else np.zeros(0, dtype=np.int64)
    return data.subset(tr), data.subset(te)
