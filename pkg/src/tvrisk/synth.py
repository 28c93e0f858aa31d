"""Synthetic cohorts with explicit ground-truth log-odds, the verification oracle.

A truth is: an intercept, per-feature static effects (piecewise-linear in the
feature value), optional time-varying effects (a value curve scaled by a day
profile that may be piecewise-linear or stepwise, so discontinuous changepoints
are expressible), per-feature sampling distributions, a piecewise-constant
admission-day density, and outcome-independent missingness rates applied after
the outcome draw.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cohort import CohortTable, Feature, FeatureSchema
from .effects import BiomarkerGroup, EffectSeries
from .gam import sigmoid

DAY_FEATURE = "admission_day"
OUTCOME_FEATURE = "in_hospital_death"


@dataclass(frozen=True)
class PiecewiseLinear:
    xs: tuple[float, ...]
    ys: tuple[float, ...]

    def __post_init__(self):
        if len(self.xs) != len(self.ys) or len(self.xs) < 1:
            raise ValueError("need matching, non-empty xs/ys")
        if any(b <= a for a, b in zip(self.xs, self.xs[1:])):
            raise ValueError("xs must be strictly increasing")
        if not all(math.isfinite(v) for v in self.xs + self.ys):
            raise ValueError("knots must be finite")

    def __call__(self, v):
        return np.interp(np.asarray(v, dtype=np.float64), self.xs, self.ys)

    def to_json_dict(self):
        return {"xs": list(self.xs), "ys": list(self.ys)}

    @classmethod
    def from_json_dict(cls, d):
        return cls(tuple(float(x) for x in d["xs"]), tuple(float(y) for y in d["ys"]))


@dataclass(frozen=True)
class TimeProfile:
    """Day-dependent multiplier; 'step' holds each value until the next knot,
    'linear' interpolates between knots."""

    days: tuple[float, ...]
    values: tuple[float, ...]
    kind: str = "step"

    def __post_init__(self):
        if self.kind not in ("step", "linear"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if len(self.days) != len(self.values) or len(self.days) < 1:
            raise ValueError("need matching, non-empty days/values")
        if any(b <= a for a, b in zip(self.days, self.days[1:])):
            raise ValueError("days must be strictly increasing")

    def __call__(self, day):
        d = np.asarray(day, dtype=np.float64)
        if self.kind == "linear":
            return np.interp(d, self.days, self.values)
        idx = np.clip(np.searchsorted(self.days, d, side="right") - 1, 0, len(self.days) - 1)
        return np.asarray(self.values, dtype=np.float64)[idx]

    @property
    def changepoints(self) -> tuple[float, ...]:
        return tuple(self.days[1:]) if self.kind == "step" else ()

    def to_json_dict(self):
        return {"days": list(self.days), "values": list(self.values), "kind": self.kind}

    @classmethod
    def from_json_dict(cls, d):
        return cls(
            tuple(float(x) for x in d["days"]),
            tuple(float(y) for y in d["values"]),
            d.get("kind", "step"),
        )


@dataclass(frozen=True)
class TimeEffect:
    value_curve: PiecewiseLinear
    profile: TimeProfile

    def __call__(self, value, day):
        return self.value_curve(value) * self.profile(day)

    def to_json_dict(self):
        return {
            "value_curve": self.value_curve.to_json_dict(),
            "profile": self.profile.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, d):
        return cls(
            PiecewiseLinear.from_json_dict(d["value_curve"]),
            TimeProfile.from_json_dict(d["profile"]),
        )


@dataclass(frozen=True)
class FeatureDist:
    kind: str  # normal | lognormal | bernoulli
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind in ("normal", "lognormal"):
            if len(self.params) != 2 or self.params[1] <= 0:
                raise ValueError(f"{self.kind} needs (mu, sigma > 0)")
        elif self.kind == "bernoulli":
            if len(self.params) != 1 or not (0.0 <= self.params[0] <= 1.0):
                raise ValueError("bernoulli needs p in [0, 1]")
        else:
            raise ValueError(f"unknown distribution {self.kind!r}")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "normal":
            return rng.normal(self.params[0], self.params[1], size=n)
        if self.kind == "lognormal":
            return rng.lognormal(self.params[0], self.params[1], size=n)
        return (rng.random(n) < self.params[0]).astype(np.float64)

    def to_json_dict(self):
        return {"kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_json_dict(cls, d):
        return cls(d["kind"], tuple(float(p) for p in d["params"]))


@dataclass(frozen=True)
class SyntheticFeature:
    name: str
    dist: FeatureDist
    role: str = "lab"
    unit: str = ""
    missing_rate: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.missing_rate <= 1.0):
            raise ValueError(f"{self.name}: missing rate must be in [0, 1]")

    @property
    def kind(self) -> str:
        return "binary" if self.dist.kind == "bernoulli" else "continuous"


@dataclass(frozen=True)
class DaySegment:
    lo: int
    hi: int  # exclusive
    weight: float

    def __post_init__(self):
        if self.hi <= self.lo or self.lo < 0 or self.weight <= 0:
            raise ValueError("day segment needs 0 <= lo < hi and weight > 0")


@dataclass(frozen=True)
class GroundTruth:
    intercept: float
    features: tuple[SyntheticFeature, ...]
    static_effects: dict[str, PiecewiseLinear] = field(default_factory=dict)
    time_effects: dict[str, TimeEffect] = field(default_factory=dict)
    day_segments: tuple[DaySegment, ...] = (DaySegment(0, 551, 1.0),)

    def __post_init__(self):
        names = {f.name for f in self.features} | {DAY_FEATURE}
        for key in list(self.static_effects) + list(self.time_effects):
            if key not in names:
                raise ValueError(f"effect on unknown feature {key!r}")
        if DAY_FEATURE in self.time_effects:
            raise ValueError("admission day cannot carry a time effect on itself")

    @property
    def max_day(self) -> int:
        return max(s.hi for s in self.day_segments) - 1

    def feature(self, name: str) -> SyntheticFeature:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(f"feature {name!r} absent from truth")

    def logits(self, columns: Mapping[str, np.ndarray], days: np.ndarray) -> np.ndarray:
        out = np.full(len(days), self.intercept, dtype=np.float64)
        for name, pwl in self.static_effects.items():
            out += pwl(days if name == DAY_FEATURE else columns[name])
        for name, te in self.time_effects.items():
            out += te(columns[name], days)
        return out

    def delta_log_odds(self, feature: str, days) -> np.ndarray:
        """True high-vs-low log-odds difference of a binary feature over days."""
        f = self.feature(feature)
        if f.kind != "binary":
            raise ValueError(f"{feature!r} is not binary; no single delta exists")
        d = np.asarray(days, dtype=np.float64)
        delta = np.zeros_like(d)
        if feature in self.static_effects:
            pwl = self.static_effects[feature]
            delta += float(pwl(1.0) - pwl(0.0))
        if feature in self.time_effects:
            te = self.time_effects[feature]
            delta += float(te.value_curve(1.0) - te.value_curve(0.0)) * te.profile(d)
        return delta

    def changepoints(self, feature: str) -> tuple[float, ...]:
        te = self.time_effects.get(feature)
        return te.profile.changepoints if te else ()

    def to_json_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "features": [
                {
                    "name": f.name,
                    "dist": f.dist.to_json_dict(),
                    "role": f.role,
                    "unit": f.unit,
                    "missing_rate": f.missing_rate,
                }
                for f in self.features
            ],
            "static_effects": {k: v.to_json_dict() for k, v in self.static_effects.items()},
            "time_effects": {k: v.to_json_dict() for k, v in self.time_effects.items()},
            "day_distribution": [
                {"lo": s.lo, "hi": s.hi, "weight": s.weight} for s in self.day_segments
            ],
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "GroundTruth":
        return cls(
            intercept=float(d["intercept"]),
            features=tuple(
                SyntheticFeature(
                    name=e["name"],
                    dist=FeatureDist.from_json_dict(e["dist"]),
                    role=e.get("role", "lab"),
                    unit=e.get("unit", ""),
                    missing_rate=float(e.get("missing_rate", 0.0)),
                )
                for e in d["features"]
            ),
            static_effects={
                k: PiecewiseLinear.from_json_dict(v) for k, v in d["static_effects"].items()
            },
            time_effects={
                k: TimeEffect.from_json_dict(v) for k, v in d["time_effects"].items()
            },
            day_segments=tuple(
                DaySegment(int(s["lo"]), int(s["hi"]), float(s["weight"]))
                for s in d["day_distribution"]
            ),
        )


def load_truth(path) -> GroundTruth:
    with open(path, encoding="utf-8") as fh:
        return GroundTruth.from_json_dict(json.load(fh))


def save_truth(truth: GroundTruth, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(truth.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def generate_cohort(truth: GroundTruth, n: int, seed: int) -> tuple[CohortTable, GroundTruth]:
    """Sample an analysis-ready cohort; deterministic per seed.

    Features are drawn in declared order, the outcome from the true logit, and
    missingness is applied after the outcome draw so it is outcome-independent.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))

    columns: dict[str, np.ndarray] = {}
    for f in truth.features:
        columns[f.name] = f.dist.sample(rng, n)

    weights = np.array([s.weight for s in truth.day_segments], dtype=np.float64)
    weights /= weights.sum()
    seg = rng.choice(len(truth.day_segments), size=n, p=weights)
    los = np.array([s.lo for s in truth.day_segments], dtype=np.float64)
    spans = np.array([s.hi - s.lo for s in truth.day_segments], dtype=np.float64)
    days = np.floor(los[seg] + rng.random(n) * spans[seg])

    logit = truth.logits(columns, days)
    outcome = (rng.random(n) < sigmoid(logit)).astype(np.float64)

    for f in truth.features:
        if f.missing_rate > 0:
            mask = rng.random(n) < f.missing_rate
            col = columns[f.name].copy()
            col[mask] = np.nan
            columns[f.name] = col

    feats = [Feature(f.name, f.kind, f.unit, f.role) for f in truth.features]
    feats.append(Feature(DAY_FEATURE, "continuous", "days", "admission_day"))
    feats.append(Feature(OUTCOME_FEATURE, "binary", "", "outcome"))
    columns[DAY_FEATURE] = days
    columns[OUTCOME_FEATURE] = outcome

    table = CohortTable(
        schema=FeatureSchema(tuple(feats)),
        patient_ids=tuple(f"p{i + 1:06d}" for i in range(n)),
        columns=columns,
        provenance=("synthetic",),
    )
    return table, truth


@dataclass(frozen=True)
class RecoveryEntry:
    feature: str
    max_abs_error: float
    changepoint_estimate: int
    max_successive_diff: float
    changepoint_true: float | None
    ci_coverage: float

    def to_json_dict(self) -> dict:
        return {
            "feature": self.feature,
            "max_abs_error": self.max_abs_error,
            "changepoint_estimate": self.changepoint_estimate,
            "max_successive_diff": self.max_successive_diff,
            "changepoint_true": self.changepoint_true,
            "ci_coverage": self.ci_coverage,
        }


def recovery_error(series: EffectSeries, truth: GroundTruth, feature: str) -> RecoveryEntry:
    """Compare a fitted odds-ratio series against the truth's log-odds delta.

    The changepoint estimate is the grid day ending the largest successive jump
    in log OR; its magnitude doubles as a noise floor for constant effects.
    """
    days = series.days
    if days.min() < 0 or days.max() > truth.max_day:
        raise ValueError("series day grid extends outside the truth's day support")
    true_delta = truth.delta_log_odds(feature, days)
    log_or = series.log_or
    err = float(np.max(np.abs(log_or - true_delta)))

    diffs = np.diff(log_or)
    if len(diffs) == 0:
        raise ValueError("need at least two grid days to locate a changepoint")
    i = int(np.argmax(np.abs(diffs)))
    cps = truth.changepoints(feature)

    lo = np.log([p.lower95 for p in series.points])
    hi = np.log([p.upper95 for p in series.points])
    coverage = float(np.mean((lo <= true_delta) & (true_delta <= hi)))

    return RecoveryEntry(
        feature=feature,
        max_abs_error=err,
        changepoint_estimate=int(days[i + 1]),
        max_successive_diff=float(np.abs(diffs[i])),
        changepoint_true=cps[0] if cps else None,
        ci_coverage=coverage,
    )


# ---------------------------------------------------------------------------
# bundled scenario
# ---------------------------------------------------------------------------


def _binary(name, p, missing=0.0):
    return SyntheticFeature(name, FeatureDist("bernoulli", (p,)), role="lab", missing_rate=missing)


def nyc_like_truth() -> GroundTruth:
    """Bundled cohort scenario: a wave of admissions peaking around days 30-50,
    nonlinear demographic risk, and twelve binary biomarkers in three groups:
    thrombosis effects step up at day 50, inflammation effects decay linearly,
    the rest stay constant."""
    identity = PiecewiseLinear((0.0, 1.0), (0.0, 1.0))
    features = (
        SyntheticFeature("age", FeatureDist("normal", (62.0, 16.0)), role="demographic", unit="years"),
        SyntheticFeature("bmi", FeatureDist("normal", (29.0, 6.0)), role="demographic", unit="kg/m2"),
        SyntheticFeature("temperature", FeatureDist("normal", (99.0, 1.0)), role="vital", unit="F"),
        SyntheticFeature("male", FeatureDist("bernoulli", (0.54,)), role="demographic"),
        _binary("high_d_dimer", 0.35),
        _binary("high_hematocrit", 0.25),
        _binary("high_crp", 0.40),
        _binary("high_nlr", 0.35),
        _binary("low_albumin", 0.30, missing=0.03),
        _binary("high_ferritin", 0.30, missing=0.083),
        _binary("low_calcium", 0.20),
        _binary("high_potassium", 0.25),
        _binary("high_triglycerides", 0.35),
        _binary("high_procalcitonin", 0.30, missing=0.05),
        _binary("high_lactate", 0.22),
        _binary("high_troponin", 0.18),
    )
    static = {
        DAY_FEATURE: PiecewiseLinear((0.0, 60.0, 150.0, 550.0), (1.4, 0.3, -0.6, -1.2)),
        "age": PiecewiseLinear((25.0, 50.0, 65.0, 90.0), (-1.6, -0.7, 0.2, 2.8)),
        "bmi": PiecewiseLinear((16.0, 23.0, 28.0, 38.0, 50.0), (2.0, 0.0, -0.4, 0.5, 2.2)),
        "temperature": PiecewiseLinear((96.0, 97.5, 98.6, 100.5, 103.0), (1.6, 0.0, -0.3, 0.9, 2.0)),
        "male": PiecewiseLinear((0.0, 1.0), (0.0, 0.22)),
        "high_ferritin": PiecewiseLinear((0.0, 1.0), (0.0, 0.5)),
        "low_calcium": PiecewiseLinear((0.0, 1.0), (0.0, 0.45)),
        "high_potassium": PiecewiseLinear((0.0, 1.0), (0.0, 0.2)),
        "high_triglycerides": PiecewiseLinear((0.0, 1.0), (0.0, 0.4)),
        "high_procalcitonin": PiecewiseLinear((0.0, 1.0), (0.0, 0.6)),
        "high_lactate": PiecewiseLinear((0.0, 1.0), (0.0, 0.5)),
        "high_troponin": PiecewiseLinear((0.0, 1.0), (0.0, 0.55)),
    }
    time_effects = {
        "high_d_dimer": TimeEffect(identity, TimeProfile((0.0, 50.0), (-0.3, 0.5), "step")),
        "high_hematocrit": TimeEffect(identity, TimeProfile((0.0, 50.0), (-0.25, 0.45), "step")),
        "high_crp": TimeEffect(identity, TimeProfile((0.0, 550.0), (1.2, 0.15), "linear")),
        "high_nlr": TimeEffect(identity, TimeProfile((0.0, 550.0), (1.0, 0.1), "linear")),
        "low_albumin": TimeEffect(identity, TimeProfile((0.0, 550.0), (0.9, 0.2), "linear")),
    }
    segments = (
        DaySegment(0, 30, 1.5),
        DaySegment(30, 50, 8.0),
        DaySegment(50, 120, 2.5),
        DaySegment(120, 300, 1.0),
        DaySegment(300, 551, 1.2),
    )
    return GroundTruth(
        intercept=-4.8,
        features=features,
        static_effects=static,
        time_effects=time_effects,
        day_segments=segments,
    )


def nyc_like_groups() -> list[BiomarkerGroup]:
    return [
        BiomarkerGroup("thrombosis", ("high_d_dimer", "high_hematocrit")),
        BiomarkerGroup("inflammation", ("high_crp", "high_nlr", "low_albumin")),
        BiomarkerGroup(
            "other",
            (
                "high_ferritin",
                "low_calcium",
                "high_potassium",
                "high_triglycerides",
                "high_procalcitonin",
                "high_lactate",
                "high_troponin",
            ),
        ),
    ]


SCENARIOS = {"nyc-like": nyc_like_truth}


def truth_curves_to_csv(truth: GroundTruth, features: Sequence[str], days: Sequence[int], path):
    """Export true per-day log-odds deltas for plotting against fitted series."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "day", "true_log_or"])
        for f in features:
            deltas = truth.delta_log_odds(f, days)
            for d, v in zip(days, deltas):
                w.writerow([f, int(d), repr(float(v))])
