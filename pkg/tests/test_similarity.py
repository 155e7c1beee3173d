from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset
from knnpu.errors import SubsetOutOfRange
from knnpu.similarity import FeatureSubset, SimilarityCache, jaccard, pairwise_matrix
from oracles import jaccard_ref


def test_jaccard_examples():
    assert jaccard([1, 1, 0, 1], [1, 0, 0, 1]) == 2 / 3
    assert jaccard([0, 1, 1], [0, 1, 1]) == 1.0
    assert jaccard([1, 0, 0], [0, 1, 1]) == 0.0
    assert jaccard([0, 0], [0, 0]) == 1.0
    assert jaccard([0, 0], [0, 1]) == 0.0


def test_subset_restriction():
    a, b = [1, 1, 0, 1], [1, 0, 0, 1]
    assert jaccard(a, b, FeatureSubset([1, 2])) == 0.0
    assert jaccard(a, b, FeatureSubset([0, 3])) == 1.0
    assert jaccard(a, b, FeatureSubset([2])) == 1.0  # both empty under the subset
    with pytest.raises(SubsetOutOfRange):
        jaccard(a, b, FeatureSubset([4]))
    with pytest.raises(SubsetOutOfRange):
        FeatureSubset([])


def test_pairwise_three_rows():
    ds = make_dataset([[1, 1, 0], [1, 1, 1], [0, 0, 1]], [True, False, False])
    S = pairwise_matrix(ds).values
    assert S[0, 1] == 2 / 3 and S[0, 2] == 0.0 and S[1, 2] == 1 / 3
    assert np.all(np.diag(S) == 1.0)


def test_single_row():
    ds = make_dataset([[0, 1]], [True])
    assert pairwise_matrix(ds).values.tolist() == [[1.0]]


def test_pairwise_matches_double_loop(rng):
    dense = (rng.random((20, 10)) < 0.4).astype(np.uint8)
    ds = make_dataset(dense, [True] * 4 + [False] * 16)
    S = pairwise_matrix(ds).values
    for i in range(20):
        for j in range(20):
            assert S[i, j] == float(jaccard_ref(dense[i], dense[j]))


def test_cache_transparency(tmp_path, rng):
    dense = (rng.random((15, 8)) < 0.3).astype(np.uint8)
    ds = make_dataset(dense, [True] * 3 + [False] * 12)
    sub = FeatureSubset([0, 2, 5, 7])
    direct = pairwise_matrix(ds, sub).values
    cache = SimilarityCache(tmp_path)
    first = pairwise_matrix(ds, sub, cache).values
    again = pairwise_matrix(ds, sub, cache).values
    from_disk = pairwise_matrix(ds, sub, SimilarityCache(tmp_path)).values
    for m in (first, again, from_disk):
        assert np.array_equal(m, direct)
    assert cache.hits == 1 and cache.misses == 1
    assert len(list(tmp_path.glob("*.sim"))) == 1


def test_submatrix_equals_recomputation(rng):
    dense = (rng.random((12, 6)) < 0.4).astype(np.uint8)
    ds = make_dataset(dense, [True] * 3 + [False] * 9)
    rows = np.array([1, 4, 5, 9])
    sub = pairwise_matrix(ds).submatrix(rows).values
    assert np.array_equal(sub, pairwise_matrix(ds.subset(rows)).values)


vectors = st.integers(1, 16).flatmap(lambda m: st.tuples(
    st.lists(st.integers(0, 1), min_size=m, max_size=m),
    st.lists(st.integers(0, 1), min_size=m, max_size=m)))


@settings(max_examples=300, deadline=None)
@given(vectors)
def test_jaccard_properties(pair):
    a, b = pair
    j = jaccard(a, b)
    assert j == jaccard(b, a)
    assert 0.0 <= j <= 1.0
    assert j == float(jaccard_ref(a, b))
    if any(a):
        assert jaccard(a, a) == 1.0
    if not any(a) and not any(b):
        assert j == 1.0
    elif not any(a) or not any(b):
        assert j == 0.0


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 14), st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_matrix_properties(n, m, seed):
    r = np.random.default_rng(seed)
    dense = (r.random((n, m)) < 0.35).astype(np.uint8)
    ds = make_dataset(dense, [True] + [False] * (n - 1))
    S = pairwise_matrix(ds).values
    assert np.array_equal(S, S.T)
    assert S.min() >= 0.0 and S.max() <= 1.0
    assert np.all(np.diag(S) == 1.0)
    full = pairwise_matrix(ds, FeatureSubset(np.arange(m))).values
    assert np.array_equal(S, full)
    # equal fractions are bit-equal
    fr = {}
    for i in range(n):
        for j in range(n):
            fr.setdefault(jaccard_ref(dense[i], dense[j]), set()).add(S[i, j])
    assert all(len(v) == 1 for v in fr.values())
    assert Fraction(1) in fr
