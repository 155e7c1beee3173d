import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knnpu.dataset import SparseBinaryMatrix
from knnpu.ensemble import (
    BoostParams,
    DecisionTree,
    FeatureImportances,
    ForestParams,
    TrainedModel,
    class_blocks,
    dumps_model,
    load_model,
    loads_model,
    logistic_loss,
    mdi_importances,
    model_digest,
    predict_proba,
    save_model,
    train_balanced_forest,
    train_boosted,
    write_importances_csv,
)
from knnpu.ensemble._kernels import grow_tree
from knnpu.ensemble.boosting import staged_decision
from knnpu.ensemble.model import FOREST
from knnpu.errors import DimensionMismatch, NonPositiveLearningRate, SingleClassInput
from oracles import gini_ref


def separable(rng, n=60, m=8, n_pos=15):
    y = np.zeros(n, dtype=bool)
    y[rng.permutation(n)[:n_pos]] = True
    dense = (rng.random((n, m)) < 0.3).astype(np.uint8)
    dense[:, 0] = y
    return SparseBinaryMatrix.from_dense(dense), y, dense


def leaf_tree(value):
    return DecisionTree(np.array([-1], np.int32), np.array([-1], np.int32), np.array([-1], np.int32),
                        np.array([value]), np.array([0.0]), np.array([1.0]))


def test_forest_mean_of_leaves():
    model = TrainedModel(FOREST, (leaf_tree(0.2), leaf_tree(0.6)), 3, (1, 1), 0)
    assert predict_proba(model, [1, 0, 1]) == pytest.approx(0.4)
    with pytest.raises(DimensionMismatch):
        predict_proba(model, [1, 0])


def test_forest_separable_and_deterministic(rng):
    X, y, dense = separable(rng)
    a = train_balanced_forest(X, y, ForestParams(n_trees=30), seed=5)
    b = train_balanced_forest(X, y, ForestParams(n_trees=30), seed=5)
    c = train_balanced_forest(X, y, ForestParams(n_trees=30), seed=6)
    assert all(s.same_structure(t) for s, t in zip(a.trees, b.trees))
    assert model_digest(a) == model_digest(b) != model_digest(c)
    p = predict_proba(a, X)
    assert np.array_equal(p >= 0.5, y)
    assert predict_proba(a, dense[np.flatnonzero(y)[0]]) > 0.5
    per_tree = a.leaf_values(X)
    assert np.allclose(p, per_tree.mean(axis=1))
    for t in a.trees:
        leaves = t.value[t.feature < 0]
        assert leaves.min() >= 0 and leaves.max() <= 1


def test_balanced_bootstrap_size(rng):
    y = np.zeros(100, dtype=bool)
    y[:5] = True
    X = SparseBinaryMatrix.from_dense((rng.random((100, 10)) < 0.3).astype(np.uint8))
    model = train_balanced_forest(X, y, ForestParams(n_trees=20), seed=0)
    for t in model.trees:
        assert t.weight[0] == 10
    minority, majority = class_blocks(y)
    assert minority.size == 5 and majority.size == 95


def test_forest_root_gini_is_half(rng):
    # balanced bootstrap => root class fraction 1/2 => Gini 2q(1-q) = 1/2
    X, y, _ = separable(rng)
    model = train_balanced_forest(X, y, ForestParams(n_trees=5), seed=3)
    for t in model.trees:
        assert t.impurity[0] == pytest.approx(gini_ref([1] * 15 + [0] * 15))


def test_single_class_rejected(rng):
    X = SparseBinaryMatrix.from_dense(np.eye(4, dtype=np.uint8))
    with pytest.raises(SingleClassInput):
        train_balanced_forest(X, np.zeros(4, bool))
    with pytest.raises(SingleClassInput):
        train_boosted(X, np.ones(4, bool))


def test_boosting_prior_only(rng):
    X, y, _ = separable(rng)
    model = train_boosted(X, y, BoostParams(n_stages=0, pos_weight=1.0))
    assert np.allclose(predict_proba(model, X), y.mean())


def test_boosting_separable_and_monotone_loss(rng):
    X, y, _ = separable(rng)
    hp = BoostParams(n_stages=12, learning_rate=0.3, max_depth=3)
    model = train_boosted(X, y, hp, seed=2)
    assert np.array_equal(predict_proba(model, X) >= 0.5, y)
    w = np.where(y, model.hyperparameters["pos_weight"], 1.0)
    losses = [logistic_loss(F, y, w) for F in staged_decision(model, X)]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_learning_rate_must_be_positive(rng):
    X, y, _ = separable(rng)
    with pytest.raises(NonPositiveLearningRate):
        train_boosted(X, y, BoostParams(learning_rate=0.0))


def test_mdi_examples(rng):
    X1 = SparseBinaryMatrix.from_dense(np.array([[1], [0], [1], [0], [1], [0]], np.uint8))
    y1 = np.array([1, 0, 1, 0, 1, 0], bool)
    imp = mdi_importances(train_balanced_forest(X1, y1, ForestParams(n_trees=10)))
    assert imp.normalized.tolist() == [100.0]

    X, y, _ = separable(rng, m=2)
    imp = mdi_importances(train_balanced_forest(X, y, ForestParams(n_trees=30), seed=1))
    assert imp.raw[0] > imp.raw[1]
    # a column that is constant never splits
    dense = np.c_[y.astype(np.uint8), np.zeros(y.size, np.uint8)]
    imp = mdi_importances(train_balanced_forest(SparseBinaryMatrix.from_dense(dense), y,
                                                ForestParams(n_trees=10)))
    assert imp.raw[1] == 0.0


def test_importances_normalization():
    imp = FeatureImportances.from_raw([0.0, 0.5, 0.25])
    assert imp.normalized.tolist() == [0.0, 100.0, 50.0]
    assert FeatureImportances.from_raw([0.0, 0.0]).normalized.tolist() == [0.0, 0.0]


def test_serialization_roundtrip(tmp_path, rng):
    X, y, _ = separable(rng)
    for model in (train_balanced_forest(X, y, ForestParams(n_trees=5), seed=1),
                  train_boosted(X, y, BoostParams(n_stages=5), seed=1)):
        back = loads_model(dumps_model(model))
        assert back == model and model_digest(back) == model_digest(model)
        save_model(model, tmp_path / "m.json")
        assert np.array_equal(predict_proba(load_model(tmp_path / "m.json"), X), predict_proba(model, X))
    write_importances_csv(mdi_importances(model), [f"f{j}" for j in range(X.n_cols)], tmp_path / "i.csv")
    lines = (tmp_path / "i.csv").read_text().splitlines()
    assert lines[0] == "feature_name,raw,normalized" and len(lines) == X.n_cols + 1


def _split_decreases(dense, y, w, rows):
    """Gini decrease of every feature's split by direct enumeration (NaN if one side is empty)."""
    def gini(idx):
        W = w[idx].sum()
        q = (w[idx] * y[idx]).sum() / W
        return 2 * q * (1 - q), W
    g0, W0 = gini(rows)
    out = np.full(dense.shape[1], np.nan)
    for f in range(dense.shape[1]):
        right = rows[dense[rows, f] == 1]
        left = rows[dense[rows, f] == 0]
        if right.size and left.size:
            gl, wl = gini(left)
            gr, wr = gini(right)
            out[f] = g0 - (wl * gl + wr * gr) / W0
    return out


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_root_split_matches_bruteforce(seed):
    r = np.random.default_rng(seed)
    n, m = int(r.integers(4, 30)), int(r.integers(1, 8))
    dense = (r.random((n, m)) < 0.4).astype(np.uint8)
    y = (r.random(n) < 0.5).astype(np.float64)
    w = r.integers(1, 4, size=n).astype(np.float64)
    X = SparseBinaryMatrix.from_dense(dense)
    rows = np.arange(n, dtype=np.int64)
    feat, left, right, value, imp, node_w, _ = grow_tree(
        X.indptr, X.indices, m, rows, w, y, 1, 2, m, 2.0, 1)
    decs = _split_decreases(dense, y, w, rows)
    best = np.nanmax(decs) if np.isfinite(decs).any() else 0.0
    q = (w * y).sum() / w.sum()
    assert imp[0] == pytest.approx(2 * q * (1 - q))
    if best <= 1e-9:
        assert feat[0] == -1
    else:
        f = feat[0]
        assert decs[f] == pytest.approx(best, abs=1e-12)
        # lowest index among (numerically) tied best features
        assert f == np.flatnonzero(decs >= best - 1e-12)[0]
        dec = (node_w[0] * imp[0] - node_w[1] * imp[1] - node_w[2] * imp[2]) / node_w[0]
        assert dec == pytest.approx(best, abs=1e-12)
        assert np.all(value[1:] >= 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_forest_invariants(seed):
    r = np.random.default_rng(seed)
    n, m = int(r.integers(6, 40)), int(r.integers(1, 10))
    dense = (r.random((n, m)) < 0.35).astype(np.uint8)
    y = r.random(n) < 0.4
    y[0], y[1] = True, False
    X = SparseBinaryMatrix.from_dense(dense)
    model = train_balanced_forest(X, y, ForestParams(n_trees=8), seed=seed)
    p = predict_proba(model, X)
    assert p.min() >= 0 and p.max() <= 1
    imp = mdi_importances(model)
    assert imp.raw.min() >= 0
    per_tree_total = np.mean([t.impurity_decrease().sum() for t in model.trees])
    assert imp.raw.sum() == pytest.approx(per_tree_total, abs=1e-12)
    # telescoping: total decrease = root impurity - weighted leaf impurity
    for t in model.trees:
        leaves = t.feature < 0
        tele = t.impurity[0] - (t.weight[leaves] * t.impurity[leaves]).sum() / t.weight[0]
        assert t.impurity_decrease().sum() == pytest.approx(tele, abs=1e-12)
        assert np.all(t.impurity_decrease()[t.feature >= 0] > 0)
        assert np.all(t.feature[t.feature >= 0] < m)
