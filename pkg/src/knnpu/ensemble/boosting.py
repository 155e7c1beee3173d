"""Gradient-boosted regression trees on logistic loss.

Stage m fits a depth-limited tree to the residuals ``y - sigmoid(F)``
(weighted MSE splits, leaf = weighted mean residual) and adds it scaled by
the learning rate. Positives carry ``pos_weight`` in both the split
statistics and the initial log-odds.
"""

from __future__ import annotations

from dataclasses import asdict

import numpy as np
from scipy.special import expit

from ..dataset import SparseBinaryMatrix
from ..errors import NonPositiveLearningRate
from ._kernels import apply_trees, grow_tree
from .forest import _check_labels
from .model import BOOSTED, BoostParams, DecisionTree, TrainedModel

MSE_SCALE = 1.0


def _sample_weight(y: np.ndarray, pos_weight: float) -> np.ndarray:
    return np.where(y, pos_weight, 1.0)


def resolve_pos_weight(y: np.ndarray, hp: BoostParams) -> float:
    if hp.pos_weight is not None:
        return float(hp.pos_weight)
    return float((~y).sum()) / float(y.sum())


def logistic_loss(F: np.ndarray, y, weight=None) -> float:
    """Weighted mean negative log-likelihood of labels ``y`` under log-odds ``F``."""
    y = np.asarray(y, dtype=np.float64)
    w = np.ones_like(y) if weight is None else np.asarray(weight, dtype=np.float64)
    # log(1 + e^F) - y F, computed stably
    per = np.logaddexp(0.0, F) - y * F
    return float(np.sum(w * per) / np.sum(w))


def _single_tree_values(X: SparseBinaryMatrix, tree: DecisionTree) -> np.ndarray:
    offsets = np.array([0, tree.n_nodes], dtype=np.int64)
    return apply_trees(X.indptr, X.indices, offsets, tree.feature, tree.left,
                       tree.right, tree.value, X.n_cols)[:, 0]


def train_boosted(X: SparseBinaryMatrix, y, hp: BoostParams | None = None,
                  seed: int = 0) -> TrainedModel:
    hp = hp or BoostParams()
    if not hp.learning_rate > 0:
        raise NonPositiveLearningRate(f"learning rate must be > 0, got {hp.learning_rate}")
    y = _check_labels(y, X.n_rows)
    pos_weight = resolve_pos_weight(y, hp)
    w = _sample_weight(y, pos_weight)
    yf = y.astype(np.float64)
    wpos = float(np.sum(w * yf))
    wneg = float(np.sum(w * (1.0 - yf)))
    base = float(np.log(wpos / wneg))
    rows = np.arange(X.n_rows, dtype=np.int64)
    rng = np.random.default_rng(seed)

    F = np.full(X.n_rows, base)
    trees = []
    for _ in range(hp.n_stages):
        resid = yf - expit(F)
        out = grow_tree(
            X.indptr, X.indices, X.n_cols, rows, w, resid,
            hp.max_depth, hp.min_samples_split, X.n_cols, MSE_SCALE,
            int(rng.integers(0, 2**63 - 1)),
        )
        tree = DecisionTree(*out[:6])
        trees.append(tree)
        F = F + hp.learning_rate * _single_tree_values(X, tree)

    params = asdict(hp)
    params["pos_weight"] = pos_weight
    return TrainedModel(
        kind=BOOSTED,
        trees=tuple(trees),
        n_features=X.n_cols,
        class_counts=(int((~y).sum()), int(y.sum())),
        seed=int(seed),
        hyperparameters=params,
        base_score=base,
        learning_rate=float(hp.learning_rate),
    )


def staged_decision(model: TrainedModel, X: SparseBinaryMatrix):
    """Yield the log-odds after 0, 1, ..., n_stages stages."""
    leaves = model.leaf_values(X)
    F = np.full(X.n_rows, model.base_score)
    yield F.copy()
    for j in range(leaves.shape[1]):
        F = F + model.learning_rate * leaves[:, j]
        yield F.copy()
