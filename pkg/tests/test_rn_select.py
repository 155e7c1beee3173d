from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset
from knnpu.dataset import partition_pu
from knnpu.ensemble import ForestParams, FeatureImportances, train_balanced_forest
from knnpu.errors import EmptyU, InvalidConfig, KTooLarge, ModelWithoutImportances
from knnpu.rn_select import (
    RNParams,
    knn_feature_filter,
    neighbour_order,
    reliable_negatives,
    resolve_n_f,
    select_from_order,
    top_features,
)
from knnpu.similarity import FeatureSubset, pairwise_matrix
from oracles import reliable_negatives_ref


def toy():
    # rows: p1, u1, u2, u3
    return make_dataset([[1, 1, 0], [1, 1, 1], [0, 0, 1], [0, 1, 1]],
                        [True, False, False, False], ["p1", "u1", "u2", "u3"])


def run(ds, k, t, subset=None):
    P, U = partition_pu(ds)
    return reliable_negatives(P, U, pairwise_matrix(ds, subset), k=k, t=t)


def test_hand_checked_example():
    ds = toy()
    res = run(ds, 2, 1)
    assert [ds.ids[i] for i in res.reliable_negatives] == ["u2", "u3"]
    rows = {r["id"]: r for r in res.trace_rows(ds.ids)}
    assert rows["u1"]["nearest_label"] == "P" and not rows["u1"]["admitted"]
    assert rows["u1"]["neighbour_ids"] == ["p1", "u3"]
    assert rows["u1"]["tied"]
    assert rows["u2"]["unlabelled_fraction"] == 1.0


def test_positive_nearest_everywhere_gives_empty():
    # every u is a copy of the positive; nothing else is closer
    ds = make_dataset([[1, 0], [1, 0], [0, 1]], [True, False, True])
    assert len(run(ds, 1, Fraction(1, 2))) == 0


def test_k1_reduces_to_nearest_label(rng):
    dense = (rng.random((25, 6)) < 0.4).astype(np.uint8)
    labels = np.zeros(25, dtype=bool)
    labels[:6] = True
    ds = make_dataset(dense, labels)
    res = run(ds, 1, 0.5)
    assert np.array_equal(res.admitted, res.nearest_unlabelled)


def test_admission_rule_matches_trace(rng):
    dense = (rng.random((30, 8)) < 0.3).astype(np.uint8)
    labels = rng.random(30) < 0.3
    labels[0] = True
    ds = make_dataset(dense, labels)
    res = run(ds, 3, Fraction(2, 3))
    expected = (res.unlabelled_fraction >= 2 / 3 - 1e-12) & res.nearest_unlabelled
    assert np.array_equal(res.admitted, expected)


def test_errors():
    ds = toy()
    P, U = partition_pu(ds)
    sim = pairwise_matrix(ds)
    with pytest.raises(KTooLarge):
        reliable_negatives(P, U, sim, k=4, t=1)
    with pytest.raises(EmptyU):
        reliable_negatives(np.arange(4), [], sim, k=1, t=1)
    with pytest.raises(InvalidConfig):
        RNParams(3, Fraction(1, 3))
    with pytest.raises(InvalidConfig):
        RNParams(0, 1)


def test_params_parse_thresholds():
    assert RNParams(8, "6/8").t == Fraction(3, 4)
    assert RNParams(3, 2 / 3).t == Fraction(2, 3)


def test_exact_threshold_boundary():
    # 2 of 3 unlabelled neighbours must pass t = 2/3 even though 2/3 is not a finite binary fraction
    ds = make_dataset([[1, 1, 1, 0], [1, 1, 1, 1], [1, 1, 0, 1], [0, 0, 0, 1]],
                      [False, False, True, False])
    res = run(ds, 3, Fraction(2, 3))
    assert 0 in res.reliable_negatives


def test_resolve_n_f():
    assert resolve_n_f(None, 1640) == "all"
    assert resolve_n_f("auto", 8640) == 100
    assert resolve_n_f(7, 10) == 7


def test_feature_filter_examples():
    assert knn_feature_filter([0.5, 0.3, 0.2], 2, 3) == FeatureSubset([0, 1])
    assert knn_feature_filter(np.ones(3), 2, 3) == FeatureSubset([0, 1])
    assert knn_feature_filter(FeatureImportances.from_raw([0.1, 0.9, 0.9]), 1, 3) == FeatureSubset([1])
    assert knn_feature_filter([0.5, 0.3, 0.2], 3, 3).is_all
    assert knn_feature_filter(None, "all", 3).is_all
    assert top_features([0.2, 0.5, 0.5, 0.1], 3).tolist() == [0, 1, 2]
    with pytest.raises(ModelWithoutImportances):
        knn_feature_filter(object(), 1, 3)


def test_feature_filter_finds_determining_feature(rng):
    n = 80
    y = np.zeros(n, dtype=bool)
    y[:20] = True
    dense = (rng.random((n, 6)) < 0.5).astype(np.uint8)
    dense[:, 0] = y
    ds = make_dataset(dense, y)
    model = train_balanced_forest(ds.features, y, ForestParams(n_trees=50), seed=1)
    assert knn_feature_filter(model, 1, 6) == FeatureSubset([0])


def test_order_reuse_matches_direct(rng):
    dense = (rng.random((30, 8)) < 0.3).astype(np.uint8)
    labels = np.zeros(30, dtype=bool)
    labels[rng.permutation(30)[:8]] = True
    ds = make_dataset(dense, labels)
    P, U = partition_pu(ds)
    sim = pairwise_matrix(ds)
    nb = neighbour_order(P, U, sim, 8)
    for k, t in [(3, Fraction(2, 3)), (5, 1), (8, Fraction(7, 8))]:
        a = select_from_order(nb, k, t).reliable_negatives
        b = reliable_negatives(P, U, sim, k=k, t=t).reliable_negatives
        assert np.array_equal(a, b)


def _random_case(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(3, 31))
    m = int(r.integers(1, 13))
    dense = (r.random((n, m)) < r.uniform(0.1, 0.6)).astype(np.uint8)
    labels = r.random(n) < r.uniform(0.1, 0.6)
    if labels.all():
        labels[0] = False
    return dense, labels


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(1, "1/2"), (2, "1"), (3, "2/3"), (3, "1"), (5, "4/5")]))
def test_oracle_and_invariants(seed, kt):
    dense, labels = _random_case(seed)
    k, t = kt[0], Fraction(kt[1])
    if k > len(labels) - 1:
        k = len(labels) - 1
    ds = make_dataset(dense, labels)
    res = run(ds, k, t)
    got = set(res.reliable_negatives.tolist())
    assert got == reliable_negatives_ref(dense.tolist(), labels.tolist(), k, t)
    assert not (got & set(np.flatnonzero(labels).tolist()))
    looser = set(run(ds, k, Fraction(1, 2)).reliable_negatives.tolist())
    strict = set(run(ds, k, Fraction(1)).reliable_negatives.tolist())
    assert strict <= got <= looser
    # repeated calls are identical
    assert np.array_equal(run(ds, k, t).reliable_negatives, res.reliable_negatives)
