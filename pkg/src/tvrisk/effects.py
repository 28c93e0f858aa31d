"""Odds-ratio series and thresholding built on fitted ensembles.

A biomarker's effect at day t is the high-vs-low log-odds difference
main(1) + grid(1, t) - main(0) - grid(0, t), computed per bag; the point
estimate is exp of the across-bag mean and the band comes from across-bag
percentiles. Group effects average member deltas on the log-odds scale before
exponentiating, so a singleton group reproduces its member exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bagging import BagEnsemble, percentile_bounds

GROUP_NAMES = ("thrombosis", "inflammation", "other")


@dataclass(frozen=True)
class EffectPoint:
    day: int
    odds_ratio: float
    lower95: float
    upper95: float

    def __post_init__(self):
        if not (self.odds_ratio > 0 and self.lower95 > 0 and self.upper95 > 0):
            raise ValueError("odds ratios must be positive")
        if not (self.lower95 <= self.odds_ratio <= self.upper95):
            raise ValueError("CI must contain the point estimate")


@dataclass(frozen=True)
class EffectSeries:
    subject: str
    points: tuple[EffectPoint, ...]

    def __post_init__(self):
        days = [p.day for p in self.points]
        if any(b <= a for a, b in zip(days, days[1:])):
            raise ValueError("days must be strictly increasing")

    @property
    def days(self) -> np.ndarray:
        return np.array([p.day for p in self.points], dtype=np.int64)

    @property
    def log_or(self) -> np.ndarray:
        return np.log([p.odds_ratio for p in self.points])

    def to_rows(self) -> list[dict]:
        return [
            {
                "subject": self.subject,
                "day": p.day,
                "or": p.odds_ratio,
                "lower95": p.lower95,
                "upper95": p.upper95,
            }
            for p in self.points
        ]


@dataclass(frozen=True)
class BiomarkerGroup:
    name: str
    members: tuple[str, ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError(f"group {self.name!r} is empty")


def load_groups(path) -> list[BiomarkerGroup]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    groups = [BiomarkerGroup(g["name"], tuple(g["members"])) for g in data["groups"]]
    seen: set[str] = set()
    for g in groups:
        overlap = seen & set(g.members)
        if overlap:
            raise ValueError(f"biomarkers in multiple groups: {sorted(overlap)}")
        seen |= set(g.members)
    return groups


def save_groups(groups: Sequence[BiomarkerGroup], path):
    doc = {"groups": [{"name": g.name, "members": list(g.members)} for g in groups]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _member_delta(model, biomarker: str, day_grid: np.ndarray) -> np.ndarray:
    """High-vs-low log-odds difference of one member on the day grid."""
    bm = model.bin_maps[biomarker]
    b1 = bm.assign(1.0)
    b0 = bm.assign(0.0)
    main = model.mains[biomarker].scores
    inter = model.interactions[biomarker]
    db = inter.day_map.assign(day_grid.astype(np.float64))
    return (main[b1] + inter.grid[b1, db]) - (main[b0] + inter.grid[b0, db])


def _delta_matrix(ensemble: BagEnsemble, biomarker: str, day_grid: np.ndarray) -> np.ndarray:
    for m in ensemble.members:
        if biomarker not in m.mains:
            raise KeyError(f"unknown biomarker {biomarker!r}")
        if biomarker not in m.interactions:
            raise KeyError(f"biomarker {biomarker!r} has no day interaction")
    return np.vstack([_member_delta(m, biomarker, day_grid) for m in ensemble.members])


def _series_from_deltas(subject: str, day_grid: np.ndarray, deltas: np.ndarray) -> EffectSeries:
    mean = deltas.mean(axis=0)
    lo, hi = percentile_bounds(deltas)
    # keep the band around the mean despite bootstrap-percentile skew
    lo = np.minimum(lo, mean)
    hi = np.maximum(hi, mean)
    points = tuple(
        EffectPoint(int(d), math.exp(m), math.exp(a), math.exp(b))
        for d, m, a, b in zip(day_grid, mean, lo, hi)
    )
    return EffectSeries(subject, points)


def biomarker_or_series(
    ensemble: BagEnsemble, biomarker: str, day_grid: Sequence[int]
) -> EffectSeries:
    """Per-day mortality odds ratio of one binary biomarker, with a 95% band."""
    grid = np.asarray(day_grid, dtype=np.int64)
    deltas = _delta_matrix(ensemble, biomarker, grid)
    return _series_from_deltas(biomarker, grid, deltas)


def group_or_series(
    ensemble: BagEnsemble, group: BiomarkerGroup, day_grid: Sequence[int]
) -> EffectSeries:
    """Group odds ratio: member deltas averaged on the log-odds scale per bag and day."""
    grid = np.asarray(day_grid, dtype=np.int64)
    stacks = [_delta_matrix(ensemble, b, grid) for b in group.members]
    deltas = np.mean(stacks, axis=0)
    return _series_from_deltas(group.name, grid, deltas)


def default_day_grid(max_day: int, step: int = 7) -> list[int]:
    return list(range(0, int(max_day) + 1, step))


def parse_day_grid(spec: str) -> list[int]:
    """Parse 'start:end:step' into an inclusive-start, inclusive-end day grid."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError(f"bad day grid {spec!r}, expected start:end:step")
    start, end, step = (int(p) for p in parts)
    if step <= 0 or end < start:
        raise ValueError(f"bad day grid {spec!r}")
    return list(range(start, end + 1, step))


# ---------------------------------------------------------------------------
# threshold selection on shape curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShapeCurve:
    """A 1-D shape sampled per bin: representative value, mean score, row weight.

    `edges` are the bin boundaries (len(midpoints) - 1); when absent, boundary
    values are reconstructed as midpoints of adjacent midpoints.
    """

    midpoints: np.ndarray
    scores: np.ndarray
    weights: np.ndarray
    edges: np.ndarray | None = None

    def __post_init__(self):
        m = np.asarray(self.midpoints, dtype=np.float64)
        s = np.asarray(self.scores, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        if not (len(m) == len(s) == len(w)):
            raise ValueError("midpoints, scores, weights must have equal length")
        object.__setattr__(self, "midpoints", m)
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "weights", w)
        if self.edges is not None:
            e = np.asarray(self.edges, dtype=np.float64)
            if len(e) != len(m) - 1:
                raise ValueError("need exactly one edge between adjacent bins")
            object.__setattr__(self, "edges", e)

    def boundary_values(self) -> np.ndarray:
        if self.edges is not None:
            return self.edges
        return (self.midpoints[:-1] + self.midpoints[1:]) / 2.0


def curve_from_band(band) -> ShapeCurve:
    """Build a threshold-selection curve from a ShapeBand (regular bins only)."""
    bm = band.bin_map
    nreg = bm.n_regular
    return ShapeCurve(
        midpoints=bm.midpoints(),
        scores=band.mean[:nreg],
        weights=band.weights[:nreg],
        edges=bm.edges,
    )


def curve_from_model(model, feature: str, day: int | None = None) -> ShapeCurve:
    """Per-bin curve of one fitted model, weighted by training row counts."""
    bm = model.bin_maps[feature]
    nreg = bm.n_regular
    shape = model.mains[feature]
    scores = shape.scores[:nreg].copy()
    if day is not None:
        inter = model.interactions[feature]
        db = inter.day_map.assign(float(day))
        scores += inter.grid[:nreg, db]
    return ShapeCurve(
        midpoints=bm.midpoints(),
        scores=scores,
        weights=shape.weights[:nreg],
        edges=bm.edges,
    )


def select_threshold(curve: ShapeCurve) -> tuple[float, str]:
    """Pick the bin boundary maximizing the weighted high/low score contrast.

    Returns (threshold, direction) where direction points toward the higher-risk
    side. Ties break toward the boundary nearest the weighted zero-crossing of
    the curve; the result depends only on score differences, so adding a
    constant to the whole curve changes nothing.
    """
    scores, weights = curve.scores, curve.weights
    if len(scores) < 2:
        raise ValueError("need at least 2 bins to select a threshold")
    if np.ptp(scores[weights > 0]) == 0 or (weights > 0).sum() < 2:
        raise ValueError("constant curve: no high/low separation exists")

    bounds = curve.boundary_values()
    wsum = np.cumsum(weights)
    wssum = np.cumsum(weights * scores)
    tot_w, tot_ws = wsum[-1], wssum[-1]
    lo_w, lo_ws = wsum[:-1], wssum[:-1]
    hi_w, hi_ws = tot_w - lo_w, tot_ws - lo_ws
    valid = (lo_w > 0) & (hi_w > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        contrast = np.where(valid, hi_ws / np.where(hi_w > 0, hi_w, 1.0)
                            - lo_ws / np.where(lo_w > 0, lo_w, 1.0), np.nan)
    abs_contrast = np.abs(contrast)
    best = np.nanmax(abs_contrast)
    ties = np.flatnonzero(valid & (abs_contrast >= best - 1e-12))
    if len(ties) > 1:
        crossings = _zero_crossings(curve.midpoints, scores - tot_ws / tot_w)
        if len(crossings):
            dist = np.min(
                np.abs(bounds[ties][:, None] - crossings[None, :]), axis=1
            )
            ties = ties[dist <= dist.min() + 1e-12]
    pick = int(ties[0])
    direction = "greater_than" if contrast[pick] > 0 else "less_than"
    return float(bounds[pick]), direction


def _zero_crossings(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = []
    for i in range(len(y) - 1):
        a, b = y[i], y[i + 1]
        if a == 0.0:
            out.append(x[i])
        elif a * b < 0:
            t = a / (a - b)
            out.append(x[i] + t * (x[i + 1] - x[i]))
    if len(y) and y[-1] == 0.0:
        out.append(x[-1])
    return np.asarray(out)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def series_to_csv(series_list: Sequence[EffectSeries], path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject", "day", "or", "lower95", "upper95"])
        for s in series_list:
            for r in s.to_rows():
                w.writerow([r["subject"], r["day"], repr(r["or"]),
                            repr(r["lower95"]), repr(r["upper95"])])


def series_to_json(series_list: Sequence[EffectSeries], path):
    doc = {"series": [{"subject": s.subject, "points": s.to_rows()} for s in series_list]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def series_from_csv(path) -> list[EffectSeries]:
    by_subject: dict[str, list[EffectPoint]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            by_subject.setdefault(row["subject"], []).append(
                EffectPoint(
                    int(row["day"]),
                    float(row["or"]),
                    float(row["lower95"]),
                    float(row["upper95"]),
                )
            )
    return [EffectSeries(name, tuple(pts)) for name, pts in by_subject.items()]
