"""Tree-based additive model for in-hospital mortality log-odds.

Shapes are per-feature piecewise-constant score tables over quantile bins,
learned by cyclic gradient boosting: every round visits each feature in schema
order, fits a shallow tree to the logistic-loss residual on histograms, and
accumulates the leaf values into that feature's score table. Two-dimensional
(feature x admission-day) shapes are boosted the same way against the frozen
main effects. Early stopping monitors a held-out split; the best round is kept.
"""

from __future__ import annotations

import copy as _copy
import math
from dataclasses import dataclass, field, asdict
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .binning import BinMap, build_bins
from .cohort import CohortTable, PatientRecord

LAMBDA = 1e-6  # hessian regularizer in Newton leaf values; keeps 0/0 out
MAX_NEWTON_STEP = 10.0  # cap on raw leaf value, pre learning-rate
VAL_FRACTION = 0.15  # held-out share used for early stopping


def sigmoid(x):
    return expit(np.asarray(x, dtype=np.float64))


def log_loss(y, logit) -> float:
    """Mean negative log-likelihood of labels under logit scores."""
    y = np.asarray(y, dtype=np.float64)
    z = np.where(y > 0.5, logit, -np.asarray(logit))
    return float(np.mean(np.logaddexp(0.0, -z)))


@dataclass(frozen=True)
class GamConfig:
    max_bins: int = 64
    day_bins: int = 32
    learning_rate: float = 0.05
    boosting_rounds_main: int = 2000
    boosting_rounds_interaction: int = 1000
    max_leaves: int = 3  # 1-D trees; 2-D interaction trees use at most 2x2 cells
    bag_count: int = 25
    bag_fraction: float = 0.85
    early_stop_patience: int = 50
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.max_bins, self.day_bins, self.max_leaves, self.bag_count) < 1:
            raise ValueError("bin/leaf/bag counts must be positive")
        if self.boosting_rounds_main < 0 or self.boosting_rounds_interaction < 0:
            raise ValueError("boosting rounds must be non-negative")
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValueError("learning_rate must be in (0, 1]")
        if not (0.0 < self.bag_fraction <= 1.0):
            raise ValueError("bag_fraction must be in (0, 1]")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "GamConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class ShapeMain:
    """Additive log-odds contribution per bin of one feature (missing bin last)."""

    feature: str
    scores: np.ndarray
    weights: np.ndarray  # training row count per bin

    def copy(self) -> "ShapeMain":
        return ShapeMain(self.feature, self.scores.copy(), self.weights.copy())


@dataclass
class ShapeInteraction:
    """Log-odds grid over (feature bin x admission-day bin), missing slots last."""

    feature: str
    day_map: BinMap
    grid: np.ndarray
    weights: np.ndarray

    def copy(self) -> "ShapeInteraction":
        return ShapeInteraction(self.feature, self.day_map, self.grid.copy(), self.weights.copy())


@dataclass
class GamModel:
    intercept: float
    feature_order: tuple[str, ...]
    day_feature: str
    bin_maps: dict[str, BinMap]
    mains: dict[str, ShapeMain]
    interactions: dict[str, ShapeInteraction]
    config: GamConfig

    def __post_init__(self):
        for f in self.feature_order:
            if f not in self.bin_maps:
                raise ValueError(f"modeled feature {f!r} lacks a bin map")
        for f in self.interactions:
            if f not in self.mains:
                raise ValueError(f"interaction feature {f!r} lacks a main effect")

    def copy(self) -> "GamModel":
        return GamModel(
            intercept=self.intercept,
            feature_order=self.feature_order,
            day_feature=self.day_feature,
            bin_maps=dict(self.bin_maps),
            mains={k: v.copy() for k, v in self.mains.items()},
            interactions={k: v.copy() for k, v in self.interactions.items()},
            config=self.config,
        )

    def predict_logit_table(self, table: CohortTable) -> np.ndarray:
        out = np.full(table.n_rows, self.intercept, dtype=np.float64)
        for f in self.feature_order:
            bins = self.bin_maps[f].assign(table.column(f))
            out += self.mains[f].scores[bins]
        if self.interactions:
            days = table.column(self.day_feature)
            for f, inter in self.interactions.items():
                fb = self.bin_maps[f].assign(table.column(f))
                db = inter.day_map.assign(days)
                out += inter.grid[fb, db]
        return out

    def predict_proba_table(self, table: CohortTable) -> np.ndarray:
        return sigmoid(self.predict_logit_table(table))

    def predict_logit(self, record) -> float:
        """Log-odds for one patient; missing values route to missing bins."""
        if isinstance(record, PatientRecord):
            values = dict(record.values)
            values[self.day_feature] = float(record.admission_day)
            getter = values.get
        else:
            getter = record.get
        out = self.intercept
        for f in self.feature_order:
            v = getter(f)
            b = self.bin_maps[f].assign(math.nan if v is None else float(v))
            out += float(self.mains[f].scores[b])
        day = getter(self.day_feature)
        for f, inter in self.interactions.items():
            v = getter(f)
            fb = self.bin_maps[f].assign(math.nan if v is None else float(v))
            db = inter.day_map.assign(math.nan if day is None else float(day))
            out += float(inter.grid[fb, db])
        return float(out)

    def to_json_dict(self) -> dict:
        return {
            "kind": "gam",
            "intercept": self.intercept,
            "feature_order": list(self.feature_order),
            "day_feature": self.day_feature,
            "config": self.config.to_json_dict(),
            "bin_maps": {k: v.to_json_dict() for k, v in self.bin_maps.items()},
            "mains": [
                {"feature": f, "scores": s.scores.tolist(), "weights": s.weights.tolist()}
                for f, s in self.mains.items()
            ],
            "interactions": [
                {
                    "feature": f,
                    "day_map": it.day_map.to_json_dict(),
                    "grid": it.grid.tolist(),
                    "weights": it.weights.tolist(),
                }
                for f, it in self.interactions.items()
            ],
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "GamModel":
        mains = {
            e["feature"]: ShapeMain(
                e["feature"],
                np.asarray(e["scores"], dtype=np.float64),
                np.asarray(e["weights"], dtype=np.float64),
            )
            for e in d["mains"]
        }
        interactions = {
            e["feature"]: ShapeInteraction(
                e["feature"],
                BinMap.from_json_dict(e["day_map"]),
                np.asarray(e["grid"], dtype=np.float64),
                np.asarray(e["weights"], dtype=np.float64),
            )
            for e in d["interactions"]
        }
        return cls(
            intercept=float(d["intercept"]),
            feature_order=tuple(d["feature_order"]),
            day_feature=d["day_feature"],
            bin_maps={k: BinMap.from_json_dict(v) for k, v in d["bin_maps"].items()},
            mains=mains,
            interactions=interactions,
            config=GamConfig.from_json_dict(d["config"]),
        )


def predict_logit(model: GamModel, record) -> float:
    return model.predict_logit(record)


# ---------------------------------------------------------------------------
# split search
# ---------------------------------------------------------------------------


def _leaf_value(g: float, h: float) -> float:
    v = g / (h + LAMBDA)
    return float(np.clip(v, -MAX_NEWTON_STEP, MAX_NEWTON_STEP))


def _best_intervals_1d(hg, hh, counts, max_leaves):
    """Greedy interval partition of the regular bins, Newton gain, or None.

    Returns [(start, end, raw_leaf_value), ...] covering [0, B). A partition is
    returned only when the root split has strictly positive gain.
    """
    B = len(hg)
    if B < 2 or counts.sum() == 0:
        return None
    # one prefix pass serves every sub-interval below
    G = np.concatenate(([0.0], np.cumsum(hg)))
    H = np.concatenate(([0.0], np.cumsum(hh)))
    N = np.concatenate(([0], np.cumsum(counts)))

    def seg_score(s, e):
        g = G[e] - G[s]
        return g * g / (H[e] - H[s] + LAMBDA)

    def best_cut(s, e):
        # best single cut of [s, e); returns (gain, cut) or (0, None)
        if e - s < 2:
            return 0.0, None
        g = G[s + 1 : e] - G[s]
        h = H[s + 1 : e] - H[s]
        n = N[s + 1 : e] - N[s]
        sg, sh, sn = G[e] - G[s], H[e] - H[s], N[e] - N[s]
        score = g * g / (h + LAMBDA) + (sg - g) ** 2 / (sh - h + LAMBDA)
        score[(n == 0) | (n == sn)] = -np.inf
        j = int(np.argmax(score))
        if not np.isfinite(score[j]):
            return 0.0, None
        return float(score[j] - sg * sg / (sh + LAMBDA)), s + j + 1

    gain, cut = best_cut(0, B)
    if cut is None or gain <= 0.0:
        return None
    pieces = [(0, cut), (cut, B)]
    while len(pieces) < max_leaves:
        cand = [(best_cut(s, e), i) for i, (s, e) in enumerate(pieces)]
        (gain, cut), i = max(cand, key=lambda t: t[0][0])
        if cut is None or gain <= 0.0:
            break
        s, e = pieces[i]
        pieces[i : i + 1] = [(s, cut), (cut, e)]
    return [
        (s, e, _leaf_value(G[e] - G[s], H[e] - H[s]))
        for s, e in sorted(pieces)
    ]


def _best_sides_split(mg, mh, mn):
    """Row-wise best single cut for a stack of side histograms.

    For each row returns the leaf-score sum (split if it beats the whole row)
    and the cut index (-1 when unsplit)."""
    tg = mg.sum(axis=1)
    th = mh.sum(axis=1)
    tn = mn.sum(axis=1)
    whole = tg**2 / (th + LAMBDA)
    if mg.shape[1] < 2:
        return whole, np.full(len(mg), -1)
    G = np.cumsum(mg, axis=1)[:, :-1]
    H = np.cumsum(mh, axis=1)[:, :-1]
    N = np.cumsum(mn, axis=1)[:, :-1]
    valid = (N > 0) & (N < tn[:, None])
    score = G**2 / (H + LAMBDA) + (tg[:, None] - G) ** 2 / (th[:, None] - H + LAMBDA)
    score = np.where(valid, score, -np.inf)
    j = np.argmax(score, axis=1)
    best = score[np.arange(len(mg)), j]
    use = best > whole
    return np.where(use, best, whole), np.where(use, j + 1, -1)


def _best_cells_2d(hg2, hh2, cnt2):
    """Best <=4-cell partition of a 2-D histogram: one cut on a root axis, then
    at most one cut of the other axis per side. Returns (cells, axis) or None,
    with cells as (lo0, hi0, lo1, hi1, raw_leaf_value) in array coordinates."""
    tot_g, tot_h, tot_n = hg2.sum(), hh2.sum(), cnt2.sum()
    if tot_n == 0:
        return None
    whole = tot_g**2 / (tot_h + LAMBDA)

    best = None  # (score, axis, root_cut, cut_a, cut_b)
    for axis in (0, 1):
        g2 = hg2 if axis == 0 else hg2.T
        h2 = hh2 if axis == 0 else hh2.T
        n2 = cnt2 if axis == 0 else cnt2.T
        F = g2.shape[0]
        if F < 2:
            continue
        Pg, Ph, Pn = np.cumsum(g2, 0), np.cumsum(h2, 0), np.cumsum(n2, 0)
        topg, toph, topn = Pg[:-1], Ph[:-1], Pn[:-1]
        botg, both, botn = Pg[-1] - topg, Ph[-1] - toph, Pn[-1] - topn
        rows_top = topn.sum(axis=1)
        rows_bot = botn.sum(axis=1)
        s_top, cut_top = _best_sides_split(topg, toph, topn)
        s_bot, cut_bot = _best_sides_split(botg, both, botn)
        total = s_top + s_bot
        total = np.where((rows_top > 0) & (rows_bot > 0), total, -np.inf)
        j = int(np.argmax(total))
        if not np.isfinite(total[j]):
            continue
        if best is None or total[j] > best[0]:
            best = (float(total[j]), axis, j + 1, int(cut_top[j]), int(cut_bot[j]))

    if best is None or best[0] - whole <= 0.0:
        return None
    _, axis, root, cut_a, cut_b = best
    F, D = (hg2.shape if axis == 0 else (hg2.shape[1], hg2.shape[0]))

    def side_cells(lo0, hi0, cut):
        if cut < 0:
            return [(lo0, hi0, 0, D)]
        return [(lo0, hi0, 0, cut), (lo0, hi0, cut, D)]

    raw = side_cells(0, root, cut_a) + side_cells(root, F, cut_b)
    cells = []
    for lo0, hi0, lo1, hi1 in raw:
        if axis == 0:
            block_g = hg2[lo0:hi0, lo1:hi1]
            block_h = hh2[lo0:hi0, lo1:hi1]
            coords = (lo0, hi0, lo1, hi1)
        else:
            block_g = hg2[lo1:hi1, lo0:hi0]
            block_h = hh2[lo1:hi1, lo0:hi0]
            coords = (lo1, hi1, lo0, hi0)
        cells.append(coords + (_leaf_value(block_g.sum(), block_h.sum()),))
    return cells


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


def _validate_outcome(table: CohortTable) -> np.ndarray:
    y = table.outcomes
    if np.isnan(y).any():
        raise ValueError("outcome has missing values; exclude those rows first")
    pos = int((y == 1).sum())
    neg = int((y == 0).sum())
    if pos < 2 or neg < 2:
        raise ValueError(f"need >= 2 rows of each outcome class, got {pos} dead / {neg} alive")
    return y.astype(np.float64)


def _holdout_split(n: int, rng: np.random.Generator):
    n_val = int(round(n * VAL_FRACTION))
    if n_val < 1 or n - n_val < 2:
        return np.arange(n), np.empty(0, dtype=np.intp)
    perm = rng.permutation(n)
    return perm[n_val:], perm[:n_val]


class _EarlyStop:
    """Tracks held-out loss; remembers the best-round snapshot of the shapes."""

    def __init__(self, patience: int, snapshot_fn):
        self.patience = patience
        self.snapshot_fn = snapshot_fn
        self.best_loss = math.inf
        self.best_snapshot = snapshot_fn()
        self.stall = 0

    def update(self, loss: float) -> bool:
        """Record a round's held-out loss; True means stop boosting."""
        if loss < self.best_loss - 1e-12:
            self.best_loss = loss
            self.best_snapshot = self.snapshot_fn()
            self.stall = 0
            return False
        self.stall += 1
        return self.stall >= self.patience


class _Term:
    """One boosted additive term: a flat value table indexed by per-row bin slots."""

    def __init__(self, key: str, n_slots: int, bins_boost, bins_val, propose):
        self.key = key
        self.n_slots = n_slots
        self.bins_boost = bins_boost
        self.bins_val = bins_val
        self.propose = propose  # (hist_g, hist_h) -> raw flat delta, or None
        self.values = np.zeros(n_slots)


def _make_main_proposer(bm: BinMap, counts: np.ndarray, max_leaves: int):
    nreg = bm.n_regular
    mi = bm.missing_index

    def propose(hg, hh):
        intervals = _best_intervals_1d(hg[:nreg], hh[:nreg], counts[:nreg], max_leaves)
        if intervals is None:
            return None
        delta = np.zeros(len(hg))
        for s, e, v in intervals:
            delta[s:e] = v
        if counts[mi] > 0:
            delta[mi] = _leaf_value(hg[mi], hh[mi])
        return delta

    return propose


def _make_interaction_proposer(nf: int, ndt: int, freg: int, dreg: int, counts2: np.ndarray):
    def propose(hg, hh):
        hg2 = hg.reshape(nf, ndt)
        hh2 = hh.reshape(nf, ndt)
        cells = _best_cells_2d(hg2[:freg, :dreg], hh2[:freg, :dreg], counts2[:freg, :dreg])
        if cells is None:
            return None
        delta = np.zeros((nf, ndt))
        for f0, f1, d0, d1, v in cells:
            delta[f0:f1, d0:d1] = v
        if counts2[freg:, :].sum() > 0:
            delta[freg, :] = _leaf_value(hg2[freg:, :].sum(), hh2[freg:, :].sum())
        return delta.ravel()

    return propose


def _boost_terms(
    terms: dict[str, _Term],
    y_boost: np.ndarray,
    y_val: np.ndarray,
    logit_boost: np.ndarray,
    logit_val: np.ndarray,
    lr: float,
    rounds: int,
    patience: int,
):
    """Boost the terms in place against logistic loss, in two stages.

    Stage one cycles over all terms per round under a shared held-out early
    stop. Because every term moves each round, the shared validation minimum
    can arrive while weak-but-real terms are still growing (noise fitted by
    null terms swamps their remaining gain), so stage two revisits each term
    alone with its own early stop; a term with nothing left to learn degrades
    held-out loss immediately and stays at its stage-one values. Solo rounds
    are capped near the geometric time constant of the learning rate so a term
    cannot keep chasing hairline validation improvements.
    """
    use_val = len(y_val) > 0
    solo_cap = min(rounds, math.ceil(12.0 / lr) + patience)

    def visit(term: _Term) -> bool:
        nonlocal logit_boost, logit_val
        p = sigmoid(logit_boost)
        g = y_boost - p
        h = p * (1.0 - p)
        hg = np.bincount(term.bins_boost, weights=g, minlength=term.n_slots)
        hh = np.bincount(term.bins_boost, weights=h, minlength=term.n_slots)
        raw = term.propose(hg, hh)
        if raw is None:
            return False
        delta = lr * raw
        term.values += delta
        logit_boost += delta[term.bins_boost]
        if use_val:
            logit_val += delta[term.bins_val]
        return True

    def val_loss() -> float:
        return log_loss(y_val, logit_val)

    def rewind(term: _Term, target: np.ndarray):
        nonlocal logit_boost, logit_val
        diff = target - term.values
        if np.any(diff != 0.0):
            logit_boost += diff[term.bins_boost]
            if use_val:
                logit_val += diff[term.bins_val]
        term.values = target.copy()

    stopper = _EarlyStop(patience, lambda: {k: t.values.copy() for k, t in terms.items()})
    if use_val:
        stopper.update(val_loss())
    for _ in range(rounds):
        any_update = False
        for t in terms.values():
            any_update |= visit(t)
        if use_val and stopper.update(val_loss()):
            break
        if not any_update:
            break
    if not use_val:
        return
    for k, t in terms.items():
        rewind(t, stopper.best_snapshot[k])

    for t in terms.values():
        solo = _EarlyStop(patience, lambda t=t: t.values.copy())
        solo.update(val_loss())
        for _ in range(solo_cap):
            if not visit(t):
                break
            if solo.update(val_loss()):
                break
        rewind(t, solo.best_snapshot)


def fit_main_effects(
    table: CohortTable,
    cfg: GamConfig,
    rng: np.random.Generator | None = None,
    bin_maps: Mapping[str, BinMap] | None = None,
    holdout: tuple[np.ndarray, np.ndarray] | None = None,
) -> GamModel:
    """Cyclically boost one score table per modeled feature against logistic loss.

    The intercept is the analytic base-rate log-odds of the full table; shapes
    start at zero and are returned uncentered (see `center_model`). When
    `bin_maps` is given (bagging), those shared maps are used instead of binning
    the table itself. `holdout` is the (boost, validation) row split; pass the
    same split to `fit_time_interactions` so the grids cannot re-absorb
    main-effect residue the first stage already tuned against validation.
    """
    y = _validate_outcome(table)
    features = table.model_features()
    if not features:
        raise ValueError("no modelable features in table")
    if bin_maps is None:
        bin_maps = {f: build_bins(table.column(f), cfg.max_bins, f) for f in features}
    else:
        bin_maps = dict(bin_maps)

    if holdout is not None:
        boost_idx, val_idx = holdout
    else:
        if rng is None:
            rng = np.random.default_rng(np.random.SeedSequence(cfg.rng_seed))
        boost_idx, val_idx = _holdout_split(table.n_rows, rng)

    base = float(y.mean())
    intercept = math.log(base / (1.0 - base))

    all_bins = {f: bin_maps[f].assign(table.column(f)) for f in features}
    terms = {}
    for f in features:
        bm = bin_maps[f]
        bins_boost = all_bins[f][boost_idx]
        counts = np.bincount(bins_boost, minlength=bm.n_bins)
        terms[f] = _Term(
            f,
            bm.n_bins,
            bins_boost,
            all_bins[f][val_idx],
            _make_main_proposer(bm, counts, cfg.max_leaves),
        )

    _boost_terms(
        terms,
        y[boost_idx],
        y[val_idx],
        np.full(len(boost_idx), intercept),
        np.full(len(val_idx), intercept),
        cfg.learning_rate,
        cfg.boosting_rounds_main,
        cfg.early_stop_patience,
    )

    mains = {
        f: ShapeMain(
            f,
            terms[f].values,
            np.bincount(all_bins[f], minlength=bin_maps[f].n_bins).astype(np.float64),
        )
        for f in features
    }
    return GamModel(
        intercept=intercept,
        feature_order=features,
        day_feature=table.schema.day_feature,
        bin_maps=bin_maps,
        mains=mains,
        interactions={},
        config=cfg,
    )


def fit_time_interactions(
    model: GamModel,
    table: CohortTable,
    interaction_features: Sequence[str],
    cfg: GamConfig,
    rng: np.random.Generator | None = None,
    day_map: BinMap | None = None,
    holdout: tuple[np.ndarray, np.ndarray] | None = None,
) -> GamModel:
    """Boost (feature x admission-day) grids on the residual of the frozen model.

    Main effects are untouched; each listed feature gains one grid. With zero
    interaction rounds the input model is returned unchanged (as a copy).
    """
    features = list(interaction_features)
    for f in features:
        if f not in model.mains:
            raise ValueError(f"interaction feature {f!r} lacks a main effect")
        if f in model.interactions:
            raise ValueError(f"feature {f!r} already has an interaction")
    if model.day_feature in features:
        raise ValueError("admission day cannot interact with itself")
    if len(set(features)) != len(features):
        raise ValueError("duplicate interaction features")

    out = model.copy()
    if not features or cfg.boosting_rounds_interaction == 0:
        return out

    y = _validate_outcome(table)
    days = table.column(model.day_feature)
    if np.isnan(days).any():
        raise ValueError("admission day has missing values; exclude those rows first")
    if day_map is None:
        day_map = build_bins(days, cfg.day_bins, model.day_feature)

    if holdout is not None:
        boost_idx, val_idx = holdout
    else:
        if rng is None:
            rng = np.random.default_rng(np.random.SeedSequence(cfg.rng_seed))
        boost_idx, val_idx = _holdout_split(table.n_rows, rng)

    base_logit = model.predict_logit_table(table)
    day_bins_all = day_map.assign(days)
    nd = day_map.n_bins
    dreg = day_map.n_regular

    joint_all: dict[str, np.ndarray] = {}
    shapes: dict[str, tuple[int, int]] = {}
    terms = {}
    for f in features:
        bm = model.bin_maps[f]
        fb = bm.assign(table.column(f))
        joint_all[f] = fb * nd + day_bins_all
        shapes[f] = (bm.n_bins, nd)
        joint_boost = joint_all[f][boost_idx]
        counts2 = np.bincount(joint_boost, minlength=bm.n_bins * nd).reshape(bm.n_bins, nd)
        terms[f] = _Term(
            f,
            bm.n_bins * nd,
            joint_boost,
            joint_all[f][val_idx],
            _make_interaction_proposer(bm.n_bins, nd, bm.n_regular, dreg, counts2),
        )

    _boost_terms(
        terms,
        y[boost_idx],
        y[val_idx],
        base_logit[boost_idx].copy(),
        base_logit[val_idx].copy(),
        cfg.learning_rate,
        cfg.boosting_rounds_interaction,
        cfg.early_stop_patience,
    )
    grids = {f: terms[f].values.reshape(shapes[f]) for f in features}

    for f in features:
        weights = (
            np.bincount(joint_all[f], minlength=shapes[f][0] * shapes[f][1])
            .reshape(shapes[f])
            .astype(np.float64)
        )
        out.interactions[f] = ShapeInteraction(f, day_map, grids[f], weights)
    return out


def fit_model(
    table: CohortTable,
    cfg: GamConfig,
    interaction_features: Sequence[str] = (),
    rng: np.random.Generator | None = None,
    bin_maps: Mapping[str, BinMap] | None = None,
    day_map: BinMap | None = None,
) -> GamModel:
    """Full single-model fit: one held-out split drives early stopping for both
    the main-effect and the interaction stage; the result is centered on `table`."""
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.rng_seed))
    holdout = _holdout_split(table.n_rows, rng)
    model = fit_main_effects(table, cfg, bin_maps=bin_maps, holdout=holdout)
    if interaction_features:
        model = fit_time_interactions(
            model, table, interaction_features, cfg, day_map=day_map, holdout=holdout
        )
    return center_model(model, table)


def center_model(model: GamModel, table: CohortTable) -> GamModel:
    """Shift every shape to zero training-weighted mean, absorbing the shift
    into the intercept; per-row predictions are unchanged."""
    out = model.copy()
    intercept = model.intercept
    for f in model.feature_order:
        bm = model.bin_maps[f]
        bins = bm.assign(table.column(f))
        w = np.bincount(bins, minlength=bm.n_bins).astype(np.float64)
        s = out.mains[f]
        mu = float((w * s.scores).sum() / w.sum())
        s.scores -= mu
        s.weights = w
        intercept += mu
    if model.interactions:
        days = table.column(model.day_feature)
        for f, inter in out.interactions.items():
            bm = model.bin_maps[f]
            fb = bm.assign(table.column(f))
            db = inter.day_map.assign(days)
            nf, ndt = inter.grid.shape
            w2 = (
                np.bincount(fb * ndt + db, minlength=nf * ndt)
                .reshape(nf, ndt)
                .astype(np.float64)
            )
            mu = float((w2 * inter.grid).sum() / w2.sum())
            inter.grid -= mu
            inter.weights = w2
            intercept += mu
    out.intercept = intercept
    return out
