"""Reliable-negative selection by k nearest neighbours in Jaccard space.

An unlabelled entity ``u`` becomes a reliable negative when the fraction of
unlabelled entities among its ``k`` most similar training entities is at
least ``t`` and its single most similar entity is itself unlabelled.

Neighbours are ranked by descending similarity; equal similarities are
ordered by position in ``D = P + U`` (positives first, each block in
ascending row order). ``u`` is never its own neighbour.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import EmptyU, InvalidConfig, KTooLarge, ModelWithoutImportances
from .similarity import FeatureSubset, SimilarityMatrix

AUTO_NF_MAX_FEATURES = 2000
AUTO_NF_SIZE = 100


def as_fraction(t) -> Fraction:
    if isinstance(t, Fraction):
        return t
    if isinstance(t, str):
        return Fraction(t.strip())
    if isinstance(t, int):
        return Fraction(t)
    return Fraction(float(t)).limit_denominator(10**6)


@dataclass(frozen=True)
class RNParams:
    k: int
    t: Fraction
    n_f: int | str | None = None  # None: resolved by resolve_n_f

    def __post_init__(self):
        t = as_fraction(self.t)
        object.__setattr__(self, "t", t)
        if int(self.k) != self.k or self.k < 1:
            raise InvalidConfig(f"k must be a positive integer, got {self.k}")
        if not Fraction(1, 2) <= t <= 1:
            raise InvalidConfig(f"t must lie in [0.5, 1], got {t}")
        if self.n_f not in (None, "all", "auto") and (int(self.n_f) < 1):
            raise InvalidConfig("n_f must be >= 1, 'all' or 'auto'")


def resolve_n_f(n_f, total_features: int) -> int | str:
    """'all' below the dimensionality cut-off, else a fixed top-100 filter."""
    if n_f in (None, "auto"):
        return "all" if total_features <= AUTO_NF_MAX_FEATURES else AUTO_NF_SIZE
    if n_f == "all":
        return "all"
    return int(n_f)


@dataclass(frozen=True, eq=False)
class RNResult:
    reliable_negatives: np.ndarray   # sorted row indices, subset of U
    query: np.ndarray                # each u in U (row indices, ascending)
    neighbours: np.ndarray           # len(U) x k row indices, most similar first
    unlabelled_fraction: np.ndarray
    nearest_unlabelled: np.ndarray
    admitted: np.ndarray
    tied: np.ndarray                 # a tie decided the nearest or the k-th slot

    def __len__(self):
        return int(self.reliable_negatives.size)

    def trace_rows(self, ids=None):
        name = (lambda i: ids[i]) if ids is not None else (lambda i: int(i))
        for j, u in enumerate(self.query):
            yield {
                "id": name(u),
                "neighbour_ids": [name(v) for v in self.neighbours[j]],
                "unlabelled_fraction": float(self.unlabelled_fraction[j]),
                "nearest_label": "U" if self.nearest_unlabelled[j] else "P",
                "admitted": bool(self.admitted[j]),
                "tied": bool(self.tied[j]),
            }


@dataclass(frozen=True, eq=False)
class NeighbourOrder:
    """Sorted neighbour lists for every u, reusable across (k, t) pairs."""

    order: np.ndarray        # D in row-index terms: P block then U block
    n_pos: int
    ranked: np.ndarray       # len(U) x k_max positions into ``order``
    ranked_sim: np.ndarray   # similarities for ranked, plus one extra column when available

    @property
    def k_max(self) -> int:
        return self.ranked.shape[1]


def _split(P, U, n):
    P = np.unique(np.asarray(P, dtype=np.int64))
    U = np.unique(np.asarray(U, dtype=np.int64))
    if np.intersect1d(P, U).size:
        raise ValueError("P and U overlap")
    if P.size + U.size != n:
        raise ValueError("P and U must cover every row of the similarity matrix")
    return P, U


def neighbour_order(P, U, sim: SimilarityMatrix, k_max: int) -> NeighbourOrder:
    P, U = _split(P, U, sim.n)
    n = P.size + U.size
    if U.size == 0:
        raise EmptyU("no unlabelled entities to select from")
    if k_max > n - 1:
        raise KTooLarge(f"k={k_max} exceeds |D|-1={n - 1}")
    order = np.concatenate([P, U])
    S = np.array(sim.values[np.ix_(U, order)], dtype=np.float64)
    S[np.arange(U.size), P.size + np.arange(U.size)] = -np.inf
    # stable sort on negated similarity => equal values keep ascending D position
    width = min(k_max + 1, n - 1)
    ranked = np.argsort(-S, axis=1, kind="stable")[:, :width]
    ranked_sim = np.take_along_axis(S, ranked, axis=1)
    return NeighbourOrder(order, int(P.size), ranked[:, :k_max], ranked_sim)


def select_from_order(nb: NeighbourOrder, k: int, t) -> RNResult:
    t = as_fraction(t)
    if k > nb.k_max:
        raise KTooLarge(f"k={k} exceeds the precomputed neighbour depth {nb.k_max}")
    top = nb.ranked[:, :k]
    is_unl = top >= nb.n_pos
    count = is_unl.sum(axis=1)
    frac_ok = count * t.denominator >= t.numerator * k
    nearest_ok = is_unl[:, 0]
    admitted = frac_ok & nearest_ok
    sims = nb.ranked_sim
    tied = np.zeros(top.shape[0], dtype=bool)
    if sims.shape[1] > 1:
        tied |= sims[:, 0] == sims[:, 1]
    if sims.shape[1] > k:
        tied |= sims[:, k - 1] == sims[:, k]
    query = nb.order[nb.n_pos:]
    return RNResult(
        reliable_negatives=np.sort(query[admitted]),
        query=query,
        neighbours=nb.order[top],
        unlabelled_fraction=count / k,
        nearest_unlabelled=nearest_ok,
        admitted=admitted,
        tied=tied,
    )


def reliable_negatives(P, U, sim: SimilarityMatrix, params: RNParams | None = None,
                       *, k: int | None = None, t=None) -> RNResult:
    if params is not None:
        k, t = params.k, params.t
    if k is None or t is None:
        raise InvalidConfig("k and t are required")
    RNParams(k, t)  # range checks
    return select_from_order(neighbour_order(P, U, sim, k), k, t)


def top_features(importances, n_f: int) -> np.ndarray:
    """Indices of the ``n_f`` largest importances (ties to the lower index), sorted."""
    raw = np.asarray(importances, dtype=np.float64)
    order = np.lexsort((np.arange(raw.size), -raw))
    return np.sort(order[:n_f])


def knn_feature_filter(model, n_f, total_features: int) -> FeatureSubset:
    """Top-``n_f`` features by MDI importance, ties to the lower index.

    ``model`` may be a trained tree ensemble, a FeatureImportances or a raw
    importance vector.
    """
    n_f = resolve_n_f(n_f, total_features)
    if n_f == "all" or n_f >= total_features:
        return FeatureSubset.all()
    from .ensemble import FeatureImportances, TrainedModel, mdi_importances

    if isinstance(model, TrainedModel):
        raw = mdi_importances(model).raw
    elif isinstance(model, FeatureImportances):
        raw = model.raw
    elif isinstance(model, (np.ndarray, list, tuple)):
        raw = np.asarray(model, dtype=np.float64)
    else:
        raise ModelWithoutImportances(f"{type(model).__name__} exposes no feature importances")
    if raw.size != total_features:
        raise ModelWithoutImportances(
            f"model reports {raw.size} importances for {total_features} features")
    return FeatureSubset(top_features(raw, n_f))
