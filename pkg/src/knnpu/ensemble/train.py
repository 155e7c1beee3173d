from __future__ import annotations

from ..dataset import SparseBinaryMatrix
from .boosting import train_boosted
from .forest import train_balanced_forest
from .model import BoostParams, ForestParams, TrainedModel

CLASSIFIERS = {"brf": "BalancedForest", "gbt": "BoostedTrees"}


def train_classifier(classifier: str, X: SparseBinaryMatrix, y, params=None,
                     seed: int = 0) -> TrainedModel:
    """Dispatch on the short classifier name used in configs and the CLI."""
    if classifier == "brf":
        return train_balanced_forest(X, y, params or ForestParams(), seed)
    if classifier == "gbt":
        return train_boosted(X, y, params or BoostParams(), seed)
    raise ValueError(f"unknown classifier {classifier!r}; expected 'brf' or 'gbt'")
