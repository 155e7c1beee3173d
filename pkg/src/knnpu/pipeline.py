"""Nested cross-validation for naive and PU (reliable-negative) training.

Naive mode trains on every training entity with unlabelled rows as class 0.
PU mode, inside every training phase: optionally filter features for the
KNN space by MDI, select reliable negatives among the unlabelled rows, then
retrain on positives + reliable negatives using all features. The (k, t)
pair is chosen by an inner cross-validation on the outer training split.

All metrics are computed against the PU labels (known positive vs rest).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from ._parallel import default_workers, parallel_map
from .dataset import PUDataset
from .ensemble import BoostParams, ForestParams, TrainedModel, model_digest, predict_proba, train_classifier
from .errors import GridEmpty, InvalidConfig, MismatchedShapes, TooFewEntities, TooFewPositives
from .metrics import METRIC_NAMES, MetricsTriple, evaluate
from .rn_select import RNResult, as_fraction, knn_feature_filter, neighbour_order, resolve_n_f, select_from_order
from .similarity import FeatureSubset, SimilarityCache, SimilarityMatrix, jaccard_matrix

PROTOCOL_GRID = (
    (3, Fraction(2, 3)), (3, Fraction(1)),
    (5, Fraction(4, 5)), (5, Fraction(1)),
    (8, Fraction(6, 8)), (8, Fraction(7, 8)), (8, Fraction(1)),
)
PROTOCOL_SEEDS = (14, 33, 39, 42, 727, 1312, 1337, 56709, 177013, 241543903)
MODES = ("naive", "pu")
INNER_METRICS = ("f1", "auc")


def derive_seed(*keys: int) -> int:
    """Stable 63-bit seed from a tuple of non-negative integers."""
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)[0]
    return int(state >> np.uint64(1))


def format_grid(grid) -> str:
    return ",".join(f"{k}:{t}" for k, t in grid)


def parse_grid(text: str) -> tuple:
    grid = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        k, _, t = item.partition(":")
        if not t:
            raise InvalidConfig(f"grid entry {item!r} is not 'k:t'")
        grid.append((int(k), as_fraction(t)))
    return tuple(grid)


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "pu"
    classifier: str = "brf"
    forest: ForestParams = field(default_factory=ForestParams)
    boost: BoostParams = field(default_factory=BoostParams)
    n_f: int | str | None = None  # None: 'all' up to 2,000 features, else 100
    threshold: float = 0.5

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidConfig(f"mode must be one of {MODES}")
        if self.classifier not in ("brf", "gbt"):
            raise InvalidConfig("classifier must be 'brf' or 'gbt'")

    @property
    def classifier_params(self):
        return self.forest if self.classifier == "brf" else self.boost

    def train_dict(self) -> dict:
        return {
            "mode": self.mode,
            "classifier": self.classifier,
            "classifier_params": asdict(self.classifier_params),
            "n_f": "auto" if self.n_f is None else self.n_f,
            "threshold": self.threshold,
        }


@dataclass(frozen=True)
class CVConfig(TrainConfig):
    outer_folds: int = 10
    inner_folds: int = 5
    pu_grid: tuple = PROTOCOL_GRID
    seeds: tuple = PROTOCOL_SEEDS
    inner_metric: str = "f1"
    stratified: bool = True

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "pu_grid", tuple((int(k), as_fraction(t)) for k, t in self.pu_grid))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.outer_folds < 2 or self.inner_folds < 2:
            raise InvalidConfig("outer_folds and inner_folds must be >= 2")
        if self.inner_metric not in INNER_METRICS:
            raise InvalidConfig(f"inner_metric must be one of {INNER_METRICS}")
        if not self.seeds:
            raise InvalidConfig("at least one seed is required")
        if self.mode == "pu" and not self.pu_grid:
            raise GridEmpty("PU mode needs a non-empty (k, t) grid")

    def to_dict(self) -> dict:
        d = self.train_dict()
        d.update({
            "outer_folds": self.outer_folds,
            "inner_folds": self.inner_folds,
            "pu_grid": [[k, str(t)] for k, t in self.pu_grid] if self.mode == "pu" else [],
            "seeds": list(self.seeds),
            "inner_metric": self.inner_metric,
            "stratified": self.stratified,
        })
        return d


# -- folds -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FoldPlan:
    assignments: np.ndarray
    stratified: bool

    @property
    def n_folds(self) -> int:
        return int(self.assignments.max()) + 1

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def stratified_folds(labels, n: int, seed: int, stratified: bool = True) -> FoldPlan:
    """Seeded shuffle, then deal positives and then unlabelled rows round-robin.

    The unlabelled deal continues where the positive deal stopped, so fold
    sizes differ by at most one as well.
    """
    labels = labels.labels if isinstance(labels, PUDataset) else np.asarray(labels, dtype=bool)
    n_rows = labels.size
    if n < 1 or n > n_rows:
        raise TooFewEntities(f"cannot split {n_rows} entities into {n} folds")
    rng = np.random.default_rng(seed)
    assign = np.empty(n_rows, dtype=np.int64)
    if stratified:
        pos = np.flatnonzero(labels)
        if pos.size < n:
            raise TooFewPositives(f"{pos.size} positives cannot populate {n} stratified folds")
        unl = np.flatnonzero(~labels)
        pos = pos[rng.permutation(pos.size)]
        unl = unl[rng.permutation(unl.size)]
        assign[pos] = np.arange(pos.size) % n
        assign[unl] = (pos.size + np.arange(unl.size)) % n
    else:
        order = rng.permutation(n_rows)
        assign[order] = np.arange(n_rows) % n
    assign.setflags(write=False)
    return FoldPlan(assign, stratified)


# -- one training phase ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class FitResult:
    model: TrainedModel
    rn: RNResult | None = None
    subset: FeatureSubset | None = None
    fallback: bool = False

    @property
    def rn_size(self) -> int | None:
        return None if self.rn is None else len(self.rn)


class Trainer:
    """Trains naive or PU models on row subsets of one dataset.

    The full-dataset Jaccard matrix is memoized, so any training split with
    the unfiltered feature space reads a submatrix instead of recomputing.
    Pairwise values depend only on the two rows involved, which keeps that
    sharing leak-free.
    """

    def __init__(self, ds: PUDataset, cfg: TrainConfig, cache: SimilarityCache | None = None):
        self.ds = ds
        self.cfg = cfg
        self.n_f = resolve_n_f(cfg.n_f, ds.n_features)
        self.cache = cache if cache is not None else SimilarityCache()

    def full_similarity(self) -> SimilarityMatrix:
        vals = self.cache.get(self.ds, FeatureSubset.all())
        return SimilarityMatrix(vals, "all")

    def _train(self, rows, seed) -> TrainedModel:
        X = self.ds.features.take(rows)
        return train_classifier(self.cfg.classifier, X, self.ds.labels[rows],
                                self.cfg.classifier_params, seed)

    def knn_space(self, rows, seed) -> tuple[FeatureSubset, SimilarityMatrix]:
        """Feature subset and similarity matrix (local to ``rows``) for KNN."""
        if self.n_f == "all" or self.n_f >= self.ds.n_features:
            return FeatureSubset.all(), self.full_similarity().submatrix(rows)
        subset = knn_feature_filter(self._train(rows, seed), self.n_f, self.ds.n_features)
        vals = jaccard_matrix(self.ds.features.take(rows), subset)
        return subset, SimilarityMatrix(vals, subset.tag)

    def neighbours(self, rows, seed, k_max):
        subset, sim = self.knn_space(rows, seed)
        y = self.ds.labels[rows]
        return subset, neighbour_order(np.flatnonzero(y), np.flatnonzero(~y), sim, k_max)

    def fit_from_rn(self, rows, rn: RNResult, subset, seed) -> FitResult:
        if len(rn) == 0:
            return FitResult(self._train(rows, seed), rn, subset, fallback=True)
        local = np.union1d(np.flatnonzero(self.ds.labels[rows]), rn.reliable_negatives)
        return FitResult(self._train(rows[local], seed), rn, subset)

    def fit(self, rows, seed: int, k: int | None = None, t=None) -> FitResult:
        rows = np.asarray(rows, dtype=np.int64)
        if self.cfg.mode == "naive":
            return FitResult(self._train(rows, seed))
        subset, nb = self.neighbours(rows, seed, k)
        return self.fit_from_rn(rows, select_from_order(nb, k, t), subset, seed)

    def predict(self, model: TrainedModel, rows) -> np.ndarray:
        return predict_proba(model, self.ds.features.take(rows))


def _inner_score(y, prob, metric: str, threshold: float) -> float:
    m = evaluate(y, prob, threshold)
    if metric == "f1":
        return m.f1
    return float("nan") if m.auc_roc is None else m.auc_roc


def grid_search(trainer: Trainer, rows, grid, n_folds: int, seed: int,
                metric: str = "f1", stratified: bool = True) -> tuple[tuple, list]:
    """Pick (k, t) by the mean validation metric over an inner CV of ``rows``.

    The first grid entry wins ties. Returns (best pair, per-pair mean scores).
    """
    if not grid:
        raise GridEmpty("empty (k, t) grid")
    rows = np.asarray(rows, dtype=np.int64)
    if len(grid) == 1:
        return grid[0], [float("nan")]
    y = trainer.ds.labels[rows]
    plan = stratified_folds(y, n_folds, derive_seed(seed, 1), stratified)
    k_max = max(k for k, _ in grid)
    scores = np.zeros((len(grid), n_folds))
    for f in range(n_folds):
        learn, val = rows[plan.train_rows(f)], rows[plan.test_rows(f)]
        fit_seed = derive_seed(seed, 2, f)
        subset, nb = trainer.neighbours(learn, fit_seed, k_max)
        memo: dict[bytes, np.ndarray] = {}
        for g, (k, t) in enumerate(grid):
            rn = select_from_order(nb, k, t)
            key = rn.reliable_negatives.tobytes()
            if key not in memo:
                fit = trainer.fit_from_rn(learn, rn, subset, fit_seed)
                memo[key] = trainer.predict(fit.model, val)
            scores[g, f] = _inner_score(trainer.ds.labels[val], memo[key], metric, trainer.cfg.threshold)
    means = np.nanmean(scores, axis=1) if metric == "auc" else scores.mean(axis=1)
    best = 0
    for g in range(1, len(grid)):
        if means[g] > means[best]:
            best = g
    return grid[best], means.tolist()


# -- nested CV ---------------------------------------------------------------

@dataclass(frozen=True)
class FoldResult:
    seed: int
    fold: int
    metrics: MetricsTriple
    chosen: tuple | None       # (k, t) in PU mode
    rn_size: int | None
    n_unlabelled_train: int
    fallback: bool
    model_digest: str

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "fold": self.fold,
            **self.metrics.as_dict(),
            "chosen_k": None if self.chosen is None else self.chosen[0],
            "chosen_t": None if self.chosen is None else str(self.chosen[1]),
            "rn_size": self.rn_size,
            "n_unlabelled_train": self.n_unlabelled_train,
            "fallback_naive": self.fallback,
            "model_digest": self.model_digest,
        }


@dataclass(eq=False)
class MetricsReport:
    config: dict
    n_entities: int
    folds: list
    oof_probabilities: dict = field(default_factory=dict)  # seed -> per-entity held-out probability
    models: dict = field(default_factory=dict)  # (seed, fold) -> TrainedModel, when kept

    @property
    def seeds(self) -> list:
        return list(dict.fromkeys(r.seed for r in self.folds))

    @property
    def n_folds(self) -> int:
        return len({r.fold for r in self.folds})

    def grid(self, metric: str) -> np.ndarray:
        """seeds x folds array of one metric (NaN where undefined)."""
        out = np.full((len(self.seeds), self.n_folds), np.nan)
        index = {s: i for i, s in enumerate(self.seeds)}
        for r in self.folds:
            v = getattr(r.metrics, metric)
            out[index[r.seed], r.fold] = np.nan if v is None else v
        return out

    def seed_means(self, metric: str) -> np.ndarray:
        return np.nanmean(self.grid(metric), axis=1)

    @property
    def mean(self) -> MetricsTriple:
        return MetricsTriple(*(float(np.mean(self.seed_means(m))) for m in METRIC_NAMES))

    @property
    def std(self) -> MetricsTriple:
        """Spread of the seed-level means (sample std; 0 with one seed)."""
        def s(m):
            v = self.seed_means(m)
            return float(np.std(v, ddof=1)) if v.size > 1 else 0.0
        return MetricsTriple(*(s(m) for m in METRIC_NAMES))

    @property
    def chosen_hyperparams(self) -> list:
        return [(r.seed, r.fold, r.chosen) for r in self.folds if r.chosen is not None]

    def to_dict(self) -> dict:
        return {
            "report": "pu-estimated metrics (known positives vs rest)",
            "config": self.config,
            "n_entities": self.n_entities,
            "folds": [r.as_dict() for r in self.folds],
            "mean": self.mean.as_dict(),
            "std": self.std.as_dict(),
            "chosen_hyperparams": [
                {"seed": s, "fold": f, "k": c[0], "t": str(c[1])} for s, f, c in self.chosen_hyperparams
            ],
            "rn_sizes": [
                {"seed": r.seed, "fold": r.fold, "rn_size": r.rn_size, "fallback_naive": r.fallback}
                for r in self.folds if r.rn_size is not None
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        folds = []
        for r in d["folds"]:
            chosen = None if r["chosen_k"] is None else (r["chosen_k"], Fraction(r["chosen_t"]))
            folds.append(FoldResult(
                r["seed"], r["fold"], MetricsTriple(r["f1"], r["g_mean"], r["auc_roc"]),
                chosen, r["rn_size"], r["n_unlabelled_train"], r["fallback_naive"], r["model_digest"],
            ))
        return cls(d["config"], d["n_entities"], folds)


def _run_fold(trainer: Trainer, cfg: CVConfig, plan: FoldPlan, seed: int, fold: int):
    train = plan.train_rows(fold)
    test = plan.test_rows(fold)
    fold_seed = derive_seed(seed, fold)
    chosen = None
    if cfg.mode == "pu":
        chosen, _ = grid_search(trainer, train, cfg.pu_grid, cfg.inner_folds, fold_seed,
                                cfg.inner_metric, cfg.stratified)
        fit = trainer.fit(train, derive_seed(fold_seed, 3), *chosen)
    else:
        fit = trainer.fit(train, derive_seed(fold_seed, 3))
    prob = trainer.predict(fit.model, test)
    y_test = trainer.ds.labels[test]
    result = FoldResult(
        seed=seed,
        fold=fold,
        metrics=evaluate(y_test, prob, cfg.threshold),
        chosen=chosen,
        rn_size=fit.rn_size,
        n_unlabelled_train=int((~trainer.ds.labels[train]).sum()),
        fallback=fit.fallback,
        model_digest=model_digest(fit.model),
    )
    return result, test, prob, fit


def nested_cv(ds: PUDataset, cfg: CVConfig, workers: int | None = None,
              cache: SimilarityCache | None = None, keep_models: bool = False) -> MetricsReport:
    workers = default_workers() if workers is None else workers
    trainer = Trainer(ds, cfg, cache)
    if cfg.mode == "pu" and trainer.n_f == "all":
        trainer.full_similarity()  # compute once before workers share it
    plans = {s: stratified_folds(ds.labels, cfg.outer_folds, s, cfg.stratified) for s in cfg.seeds}
    tasks = [(s, f) for s in cfg.seeds for f in range(cfg.outer_folds)]
    outputs = parallel_map(lambda sf: _run_fold(trainer, cfg, plans[sf[0]], *sf), tasks, workers)
    report = MetricsReport(cfg.to_dict(), ds.n_entities, [o[0] for o in outputs])
    for (s, _), (_, test, prob, _) in zip(tasks, outputs):
        report.oof_probabilities.setdefault(s, np.full(ds.n_entities, np.nan))[test] = prob
    if keep_models:
        report.models = {(s, f): o[3].model for (s, f), o in zip(tasks, outputs)}
    return report


def compare_methods(a: MetricsReport, b: MetricsReport) -> dict:
    """Paired two-tailed t-test on seed-level means, per metric (a minus b)."""
    if a.seeds != b.seeds or a.n_folds != b.n_folds or a.n_entities != b.n_entities:
        raise MismatchedShapes("reports do not share seeds, fold count and dataset size")
    out = {}
    for m in METRIC_NAMES:
        va, vb = a.seed_means(m), b.seed_means(m)
        diff = va - vb
        if np.all(diff == 0):
            t_stat, p = 0.0, 1.0
        elif diff.size < 2:
            t_stat, p = float("nan"), float("nan")
        elif np.ptp(diff) <= 1e-12 * max(1.0, abs(diff[0])):  # constant shift up to rounding
            t_stat, p = math.copysign(math.inf, diff[0]), 0.0
        else:
            res = stats.ttest_rel(va, vb)
            t_stat, p = float(res.statistic), float(res.pvalue)
        out[m] = {
            "mean_a": float(va.mean()),
            "mean_b": float(vb.mean()),
            "difference": float(diff.mean()),
            "t_statistic": t_stat,
            "p_value": p,
            "significant_0.05": bool(p < 0.05),
        }
    return out
