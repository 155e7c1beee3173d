from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import expit

from ..dataset import SparseBinaryMatrix
from ..errors import DimensionMismatch, InvalidConfig, ModelWithoutImportances
from ._kernels import apply_trees

FOREST = "BalancedForest"
BOOSTED = "BoostedTrees"
MODEL_FORMAT = "knnpu-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 500
    max_depth: int | None = None
    min_samples_split: int = 2
    max_features: int | str | None = "sqrt"

    def __post_init__(self):
        if self.n_trees < 1:
            raise InvalidConfig("n_trees must be >= 1")
        if self.min_samples_split < 2:
            raise InvalidConfig("min_samples_split must be >= 2")

    def features_per_split(self, n_features: int) -> int:
        mf = self.max_features
        if mf == "sqrt":
            return max(1, math.ceil(math.sqrt(n_features)))
        if mf is None or mf == "all":
            return n_features
        return max(1, min(int(mf), n_features))


@dataclass(frozen=True)
class BoostParams:
    n_stages: int = 200
    max_depth: int = 6
    learning_rate: float = 0.1
    pos_weight: float | None = None  # None: n_negative / n_positive
    min_samples_split: int = 2

    def __post_init__(self):
        if self.n_stages < 0:
            raise InvalidConfig("n_stages must be >= 0")
        if self.max_depth < 1:
            raise InvalidConfig("max_depth must be >= 1")


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Flat node arrays; ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    impurity: np.ndarray
    weight: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def impurity_decrease(self) -> np.ndarray:
        """Weighted impurity decrease of every split node (0 at leaves)."""
        out = np.zeros(self.n_nodes)
        split = np.flatnonzero(self.feature >= 0)
        if split.size:
            l, r = self.left[split], self.right[split]
            w = self.weight
            out[split] = (w[split] * self.impurity[split]
                          - w[l] * self.impurity[l] - w[r] * self.impurity[r]) / w[0]
        return out

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "impurity": self.impurity.tolist(),
            "weight": self.weight.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int32),
            left=np.asarray(d["left"], dtype=np.int32),
            right=np.asarray(d["right"], dtype=np.int32),
            value=np.asarray(d["value"], dtype=np.float64),
            impurity=np.asarray(d["impurity"], dtype=np.float64),
            weight=np.asarray(d["weight"], dtype=np.float64),
        )

    def same_structure(self, other: "DecisionTree") -> bool:
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("feature", "left", "right", "value", "impurity", "weight"))


@dataclass(frozen=True, eq=False)
class TrainedModel:
    kind: str
    trees: tuple
    n_features: int
    class_counts: tuple  # (n_negative, n_positive) in the training labels
    seed: int
    hyperparameters: dict = field(default_factory=dict)
    base_score: float = 0.0      # boosted: initial log-odds
    learning_rate: float = 1.0   # boosted: stage shrinkage

    @cached_property
    def _packed(self):
        sizes = np.array([t.n_nodes for t in self.trees], dtype=np.int64)
        offsets = np.zeros(sizes.size + 1, dtype=np.int64)
        offsets[1:] = np.cumsum(sizes)
        if not self.trees:
            empty_i = np.zeros(0, np.int32)
            return offsets, empty_i, empty_i, empty_i, np.zeros(0)
        cat = lambda name: np.concatenate([getattr(t, name) for t in self.trees])
        return offsets, cat("feature"), cat("left"), cat("right"), cat("value")

    def leaf_values(self, X: SparseBinaryMatrix) -> np.ndarray:
        """Per-row, per-tree leaf outputs (n_rows x n_trees)."""
        offsets, feat, left, right, value = self._packed
        return apply_trees(X.indptr, X.indices, offsets, feat, left, right, value, self.n_features)

    def decision_function(self, X: SparseBinaryMatrix) -> np.ndarray:
        leaves = self.leaf_values(X)
        if self.kind == FOREST:
            return leaves.mean(axis=1)
        return self.base_score + self.learning_rate * leaves.sum(axis=1)

    def __eq__(self, other):
        if not isinstance(other, TrainedModel):
            return NotImplemented
        return dumps_model(self) == dumps_model(other)

    __hash__ = None


def _as_matrix(X, n_features: int) -> tuple[SparseBinaryMatrix, bool]:
    if isinstance(X, SparseBinaryMatrix):
        single = False
    else:
        arr = np.asarray(X)
        single = arr.ndim == 1
        arr = np.atleast_2d(arr)
        if arr.ndim != 2:
            raise DimensionMismatch("expected a binary vector or matrix")
        if arr.shape[1] != n_features:
            raise DimensionMismatch(
                f"input has {arr.shape[1]} features, model expects {n_features}")
        X = SparseBinaryMatrix.from_dense(arr)
    if X.n_cols != n_features:
        raise DimensionMismatch(f"input has {X.n_cols} features, model expects {n_features}")
    return X, single


def predict_proba(model: TrainedModel, X):
    """Positive-class probability for a vector (float) or a matrix (array)."""
    X, single = _as_matrix(X, model.n_features)
    score = model.decision_function(X)
    prob = score if model.kind == FOREST else expit(score)
    prob = np.clip(prob, 0.0, 1.0)
    return float(prob[0]) if single else prob


@dataclass(frozen=True, eq=False)
class FeatureImportances:
    raw: np.ndarray
    normalized: np.ndarray

    @classmethod
    def from_raw(cls, raw) -> "FeatureImportances":
        raw = np.asarray(raw, dtype=np.float64)
        top = raw.max() if raw.size else 0.0
        norm = 100.0 * raw / top if top > 0 else np.zeros_like(raw)
        return cls(raw, norm)


def mdi_importances(model: TrainedModel) -> FeatureImportances:
    """Mean decrease in impurity per feature, averaged over trees."""
    if not isinstance(model, TrainedModel):
        raise ModelWithoutImportances(f"{type(model).__name__} has no tree importances")
    raw = np.zeros(model.n_features)
    for tree in model.trees:
        dec = tree.impurity_decrease()
        split = tree.feature >= 0
        np.add.at(raw, tree.feature[split], dec[split])
    if model.trees:
        raw /= len(model.trees)
    return FeatureImportances.from_raw(np.maximum(raw, 0.0))


def write_importances_csv(imp: FeatureImportances, feature_names, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature_name", "raw", "normalized"])
        for name, r, nv in zip(feature_names, imp.raw, imp.normalized):
            w.writerow([name, repr(float(r)), repr(float(nv))])


def _header(model: TrainedModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind,
        "n_features": model.n_features,
        "class_counts": list(model.class_counts),
        "seed": model.seed,
        "hyperparameters": model.hyperparameters,
        "base_score": model.base_score,
        "learning_rate": model.learning_rate,
        "n_trees": len(model.trees),
    }


def dumps_model_header(model: TrainedModel) -> str:
    return json.dumps(_header(model), separators=(",", ":"))


def dumps_model(model: TrainedModel) -> str:
    doc = _header(model)
    doc["trees"] = [t.to_dict() for t in model.trees]
    return json.dumps(doc, separators=(",", ":"))


def loads_model(text: str) -> TrainedModel:
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a model file")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')}")
    return TrainedModel(
        kind=doc["kind"],
        trees=tuple(DecisionTree.from_dict(t) for t in doc["trees"]),
        n_features=int(doc["n_features"]),
        class_counts=tuple(doc["class_counts"]),
        seed=int(doc["seed"]),
        hyperparameters=doc["hyperparameters"],
        base_score=float(doc["base_score"]),
        learning_rate=float(doc["learning_rate"]),
    )


def save_model(model: TrainedModel, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def load_model(path) -> TrainedModel:
    return loads_model(Path(path).read_text(encoding="utf-8"))


def model_digest(model: TrainedModel) -> str:
    """SHA-256 over a canonical binary serialization (metadata JSON + node arrays)."""
    h = hashlib.sha256()
    h.update(json.dumps(_header(model), sort_keys=True).encode())
    for t in model.trees:
        for name in ("feature", "left", "right"):
            h.update(np.ascontiguousarray(getattr(t, name), dtype="<i4").tobytes())
        for name in ("value", "impurity", "weight"):
            h.update(np.ascontiguousarray(getattr(t, name), dtype="<f8").tobytes())
    return h.hexdigest()


def params_dict(params) -> dict:
    return asdict(params)
