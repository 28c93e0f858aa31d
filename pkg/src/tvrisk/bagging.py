"""Outer-bag ensembles: refit the model on row subsamples to get confidence bands.

Every bag draws its rows and its early-stopping split from an independent RNG
stream spawned from the config seed, so results are identical no matter how many
workers run the bags. Bin maps are built once on the full table and shared by all
members, which keeps per-bin statistics comparable across bags.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .binning import BinMap, build_bins
from .cohort import CohortTable
from .gam import GamConfig, GamModel, fit_model

FILE_FORMAT = "tvrisk-model"
FILE_VERSION = 1


@dataclass
class BagEnsemble:
    members: list[GamModel]
    bag_indices: list[np.ndarray]
    n_source_rows: int
    config: GamConfig

    def __post_init__(self):
        if len(self.members) != len(self.bag_indices):
            raise ValueError("one index set per member required")

    @property
    def bag_count(self) -> int:
        return len(self.members)

    def out_of_bag_indices(self, k: int) -> np.ndarray:
        mask = np.ones(self.n_source_rows, dtype=bool)
        mask[self.bag_indices[k]] = False
        return np.flatnonzero(mask)

    def to_json_dict(self) -> dict:
        return {
            "kind": "ensemble",
            "n_source_rows": self.n_source_rows,
            "config": self.config.to_json_dict(),
            "members": [m.to_json_dict() for m in self.members],
            "bag_indices": [idx.tolist() for idx in self.bag_indices],
        }

    @classmethod
    def from_json_dict(cls, d) -> "BagEnsemble":
        return cls(
            members=[GamModel.from_json_dict(m) for m in d["members"]],
            bag_indices=[np.asarray(i, dtype=np.intp) for i in d["bag_indices"]],
            n_source_rows=int(d["n_source_rows"]),
            config=GamConfig.from_json_dict(d["config"]),
        )


def _fit_one_bag(
    table: CohortTable,
    cfg: GamConfig,
    interaction_features: Sequence[str],
    seed_seq: np.random.SeedSequence,
    bin_maps: dict[str, BinMap],
    day_map: BinMap,
) -> tuple[GamModel, np.ndarray]:
    rng = np.random.default_rng(seed_seq)
    n = table.n_rows
    m = max(1, int(round(cfg.bag_fraction * n)))
    idx = np.sort(rng.choice(n, size=m, replace=False))
    bag = table.take(idx)
    y = bag.outcomes
    if (y == 1).sum() < 2 or (y == 0).sum() < 2:
        raise ValueError(
            f"bag of {m} rows has fewer than 2 rows of one outcome class; "
            "increase bag_fraction or table size"
        )
    model = fit_model(
        bag, cfg, interaction_features, rng=rng, bin_maps=bin_maps, day_map=day_map
    )
    return model, idx


def fit_bagged(
    table: CohortTable,
    cfg: GamConfig,
    interaction_features: Sequence[str] = (),
    n_jobs: int = 1,
) -> BagEnsemble:
    """Fit `cfg.bag_count` models on independent subsamples (without replacement).

    Deterministic for a fixed seed regardless of `n_jobs`: each bag consumes its
    own spawned RNG stream and members are collected in bag order.
    """
    features = table.model_features()
    bin_maps = {f: build_bins(table.column(f), cfg.max_bins, f) for f in features}
    day_map = build_bins(table.days, cfg.day_bins, table.schema.day_feature)
    seeds = np.random.SeedSequence(cfg.rng_seed).spawn(cfg.bag_count)

    def run(seed_seq):
        return _fit_one_bag(table, cfg, interaction_features, seed_seq, bin_maps, day_map)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(s) for s in seeds]

    return BagEnsemble(
        members=[m for m, _ in results],
        bag_indices=[idx for _, idx in results],
        n_source_rows=table.n_rows,
        config=cfg,
    )


def percentile_bounds(samples: np.ndarray, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """95% band across bags: percentile bootstrap for >= 20 bags, else normal."""
    k = samples.shape[axis]
    if k >= 20:
        lo = np.percentile(samples, 2.5, axis=axis)
        hi = np.percentile(samples, 97.5, axis=axis)
    else:
        mean = samples.mean(axis=axis)
        sd = samples.std(axis=axis, ddof=1) if k > 1 else np.zeros_like(mean)
        lo = mean - 1.96 * sd
        hi = mean + 1.96 * sd
    return lo, hi


@dataclass
class ShapeBand:
    """Per-bin across-bag mean score with a 95% band; missing bin included last.

    `weights` is the across-bag mean of per-bin training row counts."""

    feature: str
    bin_map: BinMap
    day: int | None
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    weights: np.ndarray

    @property
    def midpoints(self) -> np.ndarray:
        return self.bin_map.midpoints()


def shape_with_ci(ensemble: BagEnsemble, feature: str, day: int | None = None) -> ShapeBand:
    """Across-bag shape of one feature, optionally evaluated at an admission day
    (main effect plus that day's interaction column)."""
    for m in ensemble.members:
        if feature not in m.mains:
            raise KeyError(f"feature {feature!r} not modeled in every ensemble member")
    if day is not None:
        for m in ensemble.members:
            if feature not in m.interactions:
                raise KeyError(
                    f"feature {feature!r} has no day interaction; cannot evaluate at a day"
                )
    rows = []
    for m in ensemble.members:
        v = m.mains[feature].scores.copy()
        if day is not None:
            inter = m.interactions[feature]
            db = inter.day_map.assign(float(day))
            v += inter.grid[:, db]
        rows.append(v)
    mat = np.vstack(rows)
    lo, hi = percentile_bounds(mat)
    weights = np.vstack([m.mains[feature].weights for m in ensemble.members]).mean(axis=0)
    return ShapeBand(
        feature=feature,
        bin_map=ensemble.members[0].bin_maps[feature],
        day=day,
        mean=mat.mean(axis=0),
        lower=lo,
        upper=hi,
        weights=weights,
    )


def save_model(obj: GamModel | BagEnsemble, path):
    doc = {"format": FILE_FORMAT, "version": FILE_VERSION, "model": obj.to_json_dict()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path) -> GamModel | BagEnsemble:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != FILE_FORMAT:
        raise ValueError(f"not a {FILE_FORMAT} file: {path}")
    if doc.get("version") != FILE_VERSION:
        raise ValueError(f"unsupported model file version {doc.get('version')}")
    body = doc["model"]
    if body["kind"] == "ensemble":
        return BagEnsemble.from_json_dict(body)
    return GamModel.from_json_dict(body)


def as_ensemble(obj: GamModel | BagEnsemble, n_rows: int | None = None) -> BagEnsemble:
    """Wrap a single model as a one-member ensemble for the effects API."""
    if isinstance(obj, BagEnsemble):
        return obj
    n = n_rows if n_rows is not None else 0
    return BagEnsemble(
        members=[obj],
        bag_indices=[np.arange(n, dtype=np.intp)],
        n_source_rows=n,
        config=obj.config,
    )
