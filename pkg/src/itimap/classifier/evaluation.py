"""Prediction, metrics, and the complexity/ablation studies."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from ..bursts import ENVELOPE_FEATURES, FeatureVector
from ..scene import Technology
from .dataset import N_CLASSES, Dataset
from .ensemble import Forest, KNearest, train_forest, train_knn
from .tree import ClassificationTree, train_tree

Model = Union[ClassificationTree, Forest, KNearest]

SPEED_REPEATS = 100_000


def _as_row(fv) -> list[float]:
    if isinstance(fv, FeatureVector):
        row = [fv.duration, fv.mean_power, fv.peak_power, fv.power_std,
               fv.crest, fv.sf_ratio_3, fv.sf_ratio_8, fv.sf_bw_count]
    else:
        row = [float(v) for v in fv]
    for v in row:
        if not math.isfinite(v):
            raise ValueError("feature vector contains non-finite values")
    return row


def classify(model: Model, fv) -> tuple[Technology, float]:
    """Argmax of the model's class distribution; ties go to the earlier Technology."""
    dist = model.distribution(_as_row(fv))
    best = 0
    for i in range(1, N_CLASSES):
        if dist[i] > dist[best]:
            best = i
    return Technology(best), float(dist[best])


def predict(model: Model, X: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, matching classify's tie rule
    return np.argmax(model.predict_proba(np.asarray(X, dtype=float)), axis=1)


@dataclass
class Metrics:
    accuracy: float
    recall: dict[Technology, float]
    confusion: np.ndarray
    speed_bps: float
    n_test: int
    label: str = ""
    params: dict = field(default_factory=dict)

    def to_dict(self, include_speed: bool = True) -> dict:
        d = {
            "label": self.label,
            "params": self.params,
            "accuracy": self.accuracy,
            "n_test": self.n_test,
            "recall": {t.name: r for t, r in self.recall.items()},
            "confusion": self.confusion.tolist(),
        }
        if include_speed:
            d["speed_bps"] = self.speed_bps
        return d


def measure_speed(model: Model, X: np.ndarray, repeats: int = SPEED_REPEATS) -> float:
    """Bursts per second classifying rows of ``X`` one at a time, cycling to ``repeats`` calls."""
    rows = [list(map(float, r)) for r in np.asarray(X)]
    if not rows:
        raise ValueError("need at least one row to time")
    n_rows = len(rows)
    t0 = time.perf_counter()
    for i in range(repeats):
        classify(model, rows[i % n_rows])
    elapsed = time.perf_counter() - t0
    return repeats / max(elapsed, 1e-12)


def mean_comparisons(model: Model, X: np.ndarray) -> float | None:
    """Average feature comparisons per classification; None for k-NN."""
    if isinstance(model, ClassificationTree):
        trees = [model]
    elif isinstance(model, Forest):
        trees = model.trees
    else:
        return None
    rows = np.asarray(X, dtype=float)
    total = sum(t.leaf_with_count(r)[1] for t in trees for r in rows)
    return total / len(rows)


def evaluate(model: Model, test: Dataset, *, speed_repeats: int = SPEED_REPEATS, label: str = "",
             params: dict | None = None) -> Metrics:
    if len(test) == 0:
        raise ValueError("test set is empty")
    pred = predict(model, test.X)
    conf = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(conf, (test.y, pred), 1)
    recall = {}
    for t in Technology:
        support = conf[t].sum()
        if support:
            recall[t] = float(conf[t, t] / support)
    accuracy = float(np.trace(conf) / conf.sum())
    speed = measure_speed(model, test.X, speed_repeats) if speed_repeats else float("nan")
    return Metrics(accuracy, recall, conf, speed, len(test), label, dict(params or {}))


def ablate_spectral_features(train: Dataset, test: Dataset, max_splits: int = 20,
                             seed: int = 0) -> tuple[float, float]:
    """Held-out accuracy of a tree with all 8 features vs envelope features only."""
    with_sf = train_tree(train, max_splits, seed)
    without_sf = train_tree(train, max_splits, seed, features=ENVELOPE_FEATURES)
    acc_with = float(np.mean(predict(with_sf, test.X) == test.y))
    acc_without = float(np.mean(predict(without_sf, test.X) == test.y))
    return acc_with, acc_without


def sweep_complexity(
    train: Dataset,
    test: Dataset,
    splits_list: Sequence[int],
    forest_sizes: Sequence[int] = (30,),
    *,
    knn_k: Sequence[int] = (5,),
    seed: int = 0,
    speed_repeats: int = SPEED_REPEATS,
) -> list[Metrics]:
    """One Metrics row per tree split cap, forest size and k-NN k."""
    if not splits_list:
        raise ValueError("splits_list must be non-empty")
    rows = []
    for s in splits_list:
        m = train_tree(train, s, seed)
        rows.append(evaluate(m, test, speed_repeats=speed_repeats, label=f"CT(s={s})",
                             params={"model": "tree", "max_splits": s, "depth": m.depth(),
                                     "split_count": m.split_count}))
    for n in forest_sizes:
        f = train_forest(train, n, None, seed)
        rows.append(evaluate(f, test, speed_repeats=speed_repeats, label=f"RF({n})",
                             params={"model": "forest", "n_trees": n}))
    for k in knn_k:
        kn = train_knn(train, k)
        rows.append(evaluate(kn, test, speed_repeats=speed_repeats, label=f"kNN({k})",
                             params={"model": "knn", "k": k}))
    return rows


def metrics_to_csv(rows: Sequence[Metrics], path: str | Path, include_speed: bool = True) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        speed_col = ("speed_kbps",) if include_speed else ()
        w.writerow(("label", "accuracy", *speed_col, *(f"recall_{t.name}" for t in Technology)))
        for m in rows:
            speed = (f"{m.speed_bps / 1e3:.3f}",) if include_speed else ()
            w.writerow((m.label, f"{m.accuracy:.6f}", *speed,
                        *(f"{m.recall[t]:.6f}" if t in m.recall else "" for t in Technology)))


def model_to_dict(model: Model) -> dict:
    return model.to_dict()


def model_from_dict(d: dict) -> Model:
    kind = d.get("kind")
    if kind == "tree":
        return ClassificationTree.from_dict(d)
    if kind == "forest":
        return Forest.from_dict(d)
    if kind == "knn":
        return KNearest.from_dict(d)
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model: Model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1))


def load_model(path: str | Path) -> Model:
    return model_from_dict(json.loads(Path(path).read_text()))
