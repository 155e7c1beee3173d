"""Balanced random forest: every tree sees a class-balanced bootstrap."""

from __future__ import annotations

from dataclasses import asdict

import numpy as np

from ..dataset import SparseBinaryMatrix
from ..errors import SingleClassInput
from ._kernels import grow_forest
from .model import FOREST, DecisionTree, ForestParams, TrainedModel


def _check_labels(y, n_rows: int) -> np.ndarray:
    y = np.asarray(y).astype(bool)
    if y.ndim != 1 or y.size != n_rows:
        raise ValueError("y must be a 1-D label vector with one entry per row")
    if y.all() or not y.any():
        raise SingleClassInput("training labels contain a single class")
    return y


def class_blocks(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(minority rows, majority rows); positives count as minority on a tie."""
    pos = np.flatnonzero(y)
    neg = np.flatnonzero(~y)
    return (pos, neg) if pos.size <= neg.size else (neg, pos)


def train_balanced_forest(X: SparseBinaryMatrix, y, hp: ForestParams | None = None,
                          seed: int = 0) -> TrainedModel:
    """Each tree: m draws with replacement from each class (m = minority
    size), Gini splits over ceil(sqrt(n_features)) candidate features."""
    hp = hp or ForestParams()
    y = _check_labels(y, X.n_rows)
    minority, majority = class_blocks(y)
    offsets, *arrays = grow_forest(
        X.indptr, X.indices, X.n_cols, minority, majority, y.astype(np.float64),
        hp.n_trees, np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF),
        -1 if hp.max_depth is None else hp.max_depth,
        hp.min_samples_split, hp.features_per_split(X.n_cols),
    )
    trees = tuple(
        DecisionTree(*(a[offsets[i]:offsets[i + 1]] for a in arrays))
        for i in range(hp.n_trees)
    )
    return TrainedModel(
        kind=FOREST,
        trees=trees,
        n_features=X.n_cols,
        class_counts=(int((~y).sum()), int(y.sum())),
        seed=int(seed),
        hyperparameters=asdict(hp),
    )
