"""Seed-averaged ranking of unlabelled entities by positive-class probability."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._parallel import default_workers, parallel_map
from .dataset import PUDataset
from .ensemble import load_model, save_model
from .errors import InvalidConfig, TopNZero
from .pipeline import PROTOCOL_GRID, PROTOCOL_SEEDS, TrainConfig, Trainer, derive_seed, grid_search
from .rn_select import as_fraction


@dataclass(frozen=True)
class RankConfig(TrainConfig):
    seeds: tuple = PROTOCOL_SEEDS
    k: int | None = None      # with t: fixed (k, t); None: per-seed grid search
    t: object = None
    pu_grid: tuple = PROTOCOL_GRID
    inner_folds: int = 5
    inner_metric: str = "f1"
    stratified: bool = True

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "pu_grid", tuple((int(k), as_fraction(t)) for k, t in self.pu_grid))
        if (self.k is None) != (self.t is None):
            raise InvalidConfig("give both k and t, or neither")
        if self.t is not None:
            object.__setattr__(self, "t", as_fraction(self.t))
        if not self.seeds:
            raise InvalidConfig("at least one seed is required")

    def to_dict(self) -> dict:
        d = self.train_dict()
        d["seeds"] = list(self.seeds)
        if self.mode == "pu":
            if self.k is not None:
                d.update(k=self.k, t=str(self.t))
            else:
                d.update(pu_grid=[[k, str(t)] for k, t in self.pu_grid],
                         inner_folds=self.inner_folds, inner_metric=self.inner_metric)
        return d


@dataclass(frozen=True)
class RankEntry:
    id: str
    mean_probability: float
    per_seed: tuple


@dataclass(eq=False)
class CandidateRanking:
    entries: list
    seeds: tuple
    config: dict
    chosen: dict = field(default_factory=dict)   # seed -> (k, t) used
    rn_sizes: dict = field(default_factory=dict)  # seed -> |RN| (None in naive mode)

    def __len__(self):
        return len(self.entries)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["rank", "id", "mean_probability", *(f"p_seed_{s}" for s in self.seeds)])
        for r, e in enumerate(self.entries, start=1):
            w.writerow([r, e.id, repr(e.mean_probability), *(repr(p) for p in e.per_seed)])
        return out.getvalue()


def _model_path(directory, seed) -> Path:
    return Path(directory) / f"model_seed{seed}.json"


def _fit_seed(trainer: Trainer, cfg: RankConfig, seed: int, model_dir=None, reuse=False):
    rows = np.arange(trainer.ds.n_entities)
    if reuse:
        return load_model(_model_path(model_dir, seed)), None, None
    chosen = None
    if cfg.mode == "pu":
        if cfg.k is not None:
            chosen = (cfg.k, cfg.t)
        else:
            chosen, _ = grid_search(trainer, rows, cfg.pu_grid, cfg.inner_folds,
                                    derive_seed(seed, 7), cfg.inner_metric, cfg.stratified)
    fit = trainer.fit(rows, seed, *(chosen or ()))
    if model_dir is not None:
        Path(model_dir).mkdir(parents=True, exist_ok=True)
        save_model(fit.model, _model_path(model_dir, seed))
    return fit.model, chosen, fit.rn_size


def rank_candidates(ds: PUDataset, cfg: RankConfig, top_n: int | str = "all",
                    workers: int | None = None, model_dir=None,
                    reuse_models: bool = False) -> CandidateRanking:
    """Train on the full dataset once per seed, score every unlabelled entity,
    average probabilities over seeds, and sort (ties by entity id)."""
    if top_n != "all" and int(top_n) <= 0:
        raise TopNZero("top_n must be positive or 'all'")
    workers = default_workers() if workers is None else workers
    unl = np.flatnonzero(~ds.labels)
    if unl.size == 0:
        return CandidateRanking([], cfg.seeds, cfg.to_dict())
    if reuse_models and model_dir is None:
        raise InvalidConfig("reusing models needs a model directory")
    trainer = Trainer(ds, cfg)
    if cfg.mode == "pu" and trainer.n_f == "all" and not reuse_models:
        trainer.full_similarity()
    fits = parallel_map(lambda s: _fit_seed(trainer, cfg, s, model_dir, reuse_models), cfg.seeds, workers)
    probs = np.stack([trainer.predict(m, unl) for m, _, _ in fits], axis=1)
    mean = probs.mean(axis=1)
    ids = [ds.ids[i] for i in unl]
    order = sorted(range(unl.size), key=lambda j: (-mean[j], ids[j]))
    if top_n != "all":
        order = order[:int(top_n)]
    entries = [RankEntry(ids[j], float(mean[j]), tuple(float(p) for p in probs[j])) for j in order]
    return CandidateRanking(
        entries, cfg.seeds, cfg.to_dict(),
        chosen={s: c for s, (_, c, _) in zip(cfg.seeds, fits) if c is not None},
        rn_sizes={s: n for s, (_, _, n) in zip(cfg.seeds, fits)},
    )
