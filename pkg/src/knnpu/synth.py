"""Synthetic PU datasets with known ground truth under SCAR labelling.

Every feature is an independent Bernoulli draw with a class-specific rate.
Negatives use a base rate ``r_neg[j]`` drawn uniformly from ``base_rate``;
on the informative features positives use
``r_pos[j] = r_neg[j] + cluster_separation * (max_rate - r_neg[j])`` and on
the rest ``r_pos[j] = r_neg[j]``. Each cell is then flipped with probability
``noise_rate``. Each true positive is labelled independently with
probability ``label_frequency`` (at least one is always labelled).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dataset import PUDataset, SparseBinaryMatrix
from .errors import InvalidConfig, MismatchedLength
from .metrics import MetricsTriple, evaluate


@dataclass(frozen=True)
class SynthConfig:
    n_entities: int = 300
    n_features: int = 100
    positive_fraction: float = 0.2
    label_frequency: float = 0.5
    cluster_separation: float = 0.6
    noise_rate: float = 0.0
    seed: int = 0
    informative_fraction: float = 0.2
    base_rate: tuple = (0.02, 0.15)
    max_rate: float = 0.6

    def __post_init__(self):
        object.__setattr__(self, "base_rate", tuple(self.base_rate))
        lo, hi = self.base_rate
        checks = [
            (self.n_entities >= 2, "n_entities must be >= 2"),
            (self.n_features >= 1, "n_features must be >= 1"),
            (0 < self.positive_fraction < 1, "positive_fraction must lie in (0, 1)"),
            (0 < self.label_frequency <= 1, "label_frequency must lie in (0, 1]"),
            (0 <= self.cluster_separation <= 1, "cluster_separation must lie in [0, 1]"),
            (0 <= self.noise_rate <= 0.5, "noise_rate must lie in [0, 0.5]"),
            (0 <= self.informative_fraction <= 1, "informative_fraction must lie in [0, 1]"),
            (0 <= lo <= hi <= self.max_rate <= 1, "need 0 <= base_rate <= max_rate <= 1"),
            (self.n_true_positives >= 1, "no true positives at this size"),
            (self.n_true_positives < self.n_entities, "no true negatives at this size"),
            (self.n_entities * self.positive_fraction * self.label_frequency >= 1,
             "expected labelled positive count is below one"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvalidConfig(msg)

    @property
    def n_true_positives(self) -> int:
        return int(round(self.n_entities * self.positive_fraction))


@dataclass(frozen=True, eq=False)
class SynthDataset:
    pu_view: PUDataset
    true_labels: np.ndarray
    rates_pos: np.ndarray
    rates_neg: np.ndarray
    config: SynthConfig

    @property
    def hidden_positives(self) -> np.ndarray:
        return np.flatnonzero(self.true_labels & ~self.pu_view.labels)


def class_rates(cfg: SynthConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = cfg.base_rate
    r_neg = rng.uniform(lo, hi, size=cfg.n_features)
    n_inf = int(round(cfg.informative_fraction * cfg.n_features))
    informative = rng.permutation(cfg.n_features)[:n_inf]
    r_pos = r_neg.copy()
    r_pos[informative] = r_neg[informative] + cfg.cluster_separation * (cfg.max_rate - r_neg[informative])
    return r_pos, r_neg


def generate(cfg: SynthConfig) -> SynthDataset:
    rng = np.random.default_rng(cfg.seed)
    r_pos, r_neg = class_rates(cfg, rng)
    n, n_tp = cfg.n_entities, cfg.n_true_positives
    truth = np.zeros(n, dtype=bool)
    truth[rng.permutation(n)[:n_tp]] = True
    rates = np.where(truth[:, None], r_pos[None, :], r_neg[None, :])
    X = rng.random((n, cfg.n_features)) < rates
    if cfg.noise_rate > 0:
        X ^= rng.random(X.shape) < cfg.noise_rate
    # SCAR: labelling ignores features given the true class
    tp_rows = np.flatnonzero(truth)
    labelled = tp_rows[rng.random(tp_rows.size) < cfg.label_frequency]
    if labelled.size == 0:
        labelled = tp_rows[rng.integers(tp_rows.size)][None]
    labels = np.zeros(n, dtype=bool)
    labels[labelled] = True
    width = len(str(n - 1))
    ds = PUDataset(
        ids=[f"e{i:0{width}d}" for i in range(n)],
        labels=labels,
        features=SparseBinaryMatrix.from_dense(X.astype(np.uint8)),
        feature_names=[f"f{j}" for j in range(cfg.n_features)],
    )
    truth.setflags(write=False)
    return SynthDataset(ds, truth, r_pos, r_neg, cfg)


def true_metrics(ds: SynthDataset, scores, threshold: float = 0.5) -> MetricsTriple:
    """Metrics against the hidden ground truth instead of the PU labels."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != ds.true_labels.shape:
        raise MismatchedLength(
            f"{scores.size} scores for {ds.true_labels.size} entities")
    return evaluate(ds.true_labels, scores, threshold)


def truth_csv(ds: SynthDataset) -> str:
    lines = ["id,true_label"]
    lines += [f"{i},{int(t)}" for i, t in zip(ds.pu_view.ids, ds.true_labels)]
    return "\n".join(lines) + "\n"


def config_dict(cfg: SynthConfig) -> dict:
    d = asdict(cfg)
    d["base_rate"] = list(cfg.base_rate)
    return d
