from .dataset import Dataset, stratified_split
from .ensemble import Forest, KNearest, train_forest, train_knn
from .evaluation import (
    Metrics,
    ablate_spectral_features,
    classify,
    evaluate,
    load_model,
    mean_comparisons,
    measure_speed,
    metrics_to_csv,
    predict,
    save_model,
    sweep_complexity,
)
from .tree import ClassificationTree, train_tree

__all__ = [
    "ClassificationTree",
    "Dataset",
    "Forest",
    "KNearest",
    "Metrics",
    "ablate_spectral_features",
    "classify",
    "evaluate",
    "load_model",
    "mean_comparisons",
    "measure_speed",
    "metrics_to_csv",
    "predict",
    "save_model",
    "stratified_split",
    "sweep_complexity",
    "train_forest",
    "train_knn",
    "train_tree",
]
