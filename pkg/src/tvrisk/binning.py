"""Quantile binning of feature columns.

Cut points are chosen purely from value ranks, so any strictly increasing
transform of a column yields the identical bin assignment for every row; edges
are placed midway between adjacent distinct values, which keeps training values
off the cut points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BinMap:
    """Piecewise-constant discretization of one feature.

    Value v belongs to bin `count(edges <= v)`; NaN routes to a dedicated
    missing bin stored after the regular bins.
    """

    feature: str
    edges: np.ndarray  # strictly increasing, may be empty
    vmin: float
    vmax: float
    has_missing_bin: bool = True

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.float64)
        object.__setattr__(self, "edges", e)
        if e.size and not np.all(np.diff(e) > 0):
            raise ValueError(f"bin edges for {self.feature!r} are not strictly increasing")

    @property
    def n_regular(self) -> int:
        return len(self.edges) + 1

    @property
    def missing_index(self) -> int:
        return self.n_regular

    @property
    def n_bins(self) -> int:
        return self.n_regular + (1 if self.has_missing_bin else 0)

    def assign(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=np.float64)
        scalar = v.ndim == 0
        v = np.atleast_1d(v)
        idx = np.searchsorted(self.edges, v, side="right").astype(np.int64)
        nan = np.isnan(v)
        if nan.any():
            if not self.has_missing_bin:
                raise ValueError(f"feature {self.feature!r} has no missing bin")
            idx[nan] = self.missing_index
        return int(idx[0]) if scalar else idx

    def midpoints(self) -> np.ndarray:
        """Representative value per regular bin, for plotting and thresholding."""
        if len(self.edges) == 0:
            return np.array([(self.vmin + self.vmax) / 2.0])
        inner = (self.edges[:-1] + self.edges[1:]) / 2.0
        first = (self.vmin + self.edges[0]) / 2.0
        last = (self.edges[-1] + self.vmax) / 2.0
        return np.concatenate([[first], inner, [last]])

    def to_json_dict(self) -> dict:
        return {
            "feature": self.feature,
            "edges": self.edges.tolist(),
            "vmin": self.vmin,
            "vmax": self.vmax,
            "has_missing_bin": self.has_missing_bin,
        }

    @classmethod
    def from_json_dict(cls, d) -> "BinMap":
        return cls(
            feature=d["feature"],
            edges=np.asarray(d["edges"], dtype=np.float64),
            vmin=float(d["vmin"]),
            vmax=float(d["vmax"]),
            has_missing_bin=bool(d["has_missing_bin"]),
        )


def build_bins(column, max_bins: int, feature: str = "") -> BinMap:
    """Quantile-bin a column into at most `max_bins` bins for non-missing values.

    Cut ranks are targeted at i/max_bins of the non-missing count; each cut
    becomes the midpoint between the two distinct values straddling it. Distinct
    values fewer than max_bins each get their own bin.
    """
    if max_bins < 1:
        raise ValueError("max_bins must be >= 1")
    v = np.asarray(column, dtype=np.float64)
    finite = v[~np.isnan(v)]
    if finite.size == 0:
        raise ValueError(f"cannot bin feature {feature!r}: all values missing")
    distinct, counts = np.unique(finite, return_counts=True)
    m = len(distinct)
    if m == 1:
        return BinMap(feature, np.empty(0), float(distinct[0]), float(distinct[0]))

    cumulative = np.cumsum(counts)  # cumulative[j] = count of rows <= distinct[j]
    boundary_counts = cumulative[:-1]  # candidate cut after distinct[j]
    if m <= max_bins:
        chosen = np.arange(m - 1)
    else:
        n = finite.size
        picks = set()
        for i in range(1, max_bins):
            target = n * i / max_bins
            j = int(np.argmin(np.abs(boundary_counts - target)))
            picks.add(j)
        chosen = np.array(sorted(picks), dtype=np.intp)
    edges = (distinct[chosen] + distinct[chosen + 1]) / 2.0
    return BinMap(feature, edges, float(distinct[0]), float(distinct[-1]))
