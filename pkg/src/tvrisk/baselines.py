"""Comparison columns: univariable 2x2 odds ratios and windowed logistic regression.

The univariable OR is the cross-product ad/bc with a Woolf confidence interval,
Haldane-Anscombe corrected when any cell is zero. The multivariable baseline is
ridge-stabilized logistic regression solved by Newton/IRLS, fit separately on
admission-day windows; missing covariates are mean-filled with a per-feature
missing-indicator column added, a deliberate asymmetry with the additive model's
learned missing bins.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .cohort import CohortTable
from .gam import sigmoid

INTERCEPT = "(intercept)"
MISSING_SUFFIX = "::missing"


@dataclass(frozen=True)
class TwoByTwo:
    """Exposure x outcome counts: a,b = exposed dead/alive; c,d = unexposed dead/alive."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("counts must be non-negative")

    @classmethod
    def from_table(cls, table: CohortTable, biomarker: str) -> "TwoByTwo":
        x = table.column(biomarker)
        y = table.outcomes
        ok = ~np.isnan(x) & ~np.isnan(y)
        if not ok.any():
            raise ValueError(f"biomarker {biomarker!r} is missing for all rows")
        x, y = x[ok], y[ok]
        return cls(
            a=int(((x == 1) & (y == 1)).sum()),
            b=int(((x == 1) & (y == 0)).sum()),
            c=int(((x == 0) & (y == 1)).sum()),
            d=int(((x == 0) & (y == 0)).sum()),
        )


class OddsRatioCI(NamedTuple):
    odds_ratio: float
    lower95: float
    upper95: float


def odds_ratio_woolf(counts: TwoByTwo) -> OddsRatioCI:
    """Cross-product OR with Woolf CI; +0.5 on every cell iff any cell is zero."""
    a, b, c, d = counts.a, counts.b, counts.c, counts.d
    if min(a, b, c, d) == 0:
        a, b, c, d = a + 0.5, b + 0.5, c + 0.5, d + 0.5
    or_ = (a * d) / (b * c)
    se = math.sqrt(1 / a + 1 / b + 1 / c + 1 / d)
    log_or = math.log(or_)
    return OddsRatioCI(or_, math.exp(log_or - 1.96 * se), math.exp(log_or + 1.96 * se))


def univariable_or(table: CohortTable, biomarker: str) -> OddsRatioCI:
    """Unadjusted mortality odds ratio of one binary biomarker."""
    return odds_ratio_woolf(TwoByTwo.from_table(table, biomarker))


@dataclass
class LogisticFit:
    feature_names: tuple[str, ...]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    converged: bool
    iterations: int
    window: tuple[float, float]
    n_rows: int
    ridge: float

    def __post_init__(self):
        if len(self.feature_names) != len(self.coefficients) or len(
            self.coefficients
        ) != len(self.standard_errors):
            raise ValueError("names, coefficients and SEs must align")

    def coefficient(self, name: str) -> tuple[float, float]:
        i = self.feature_names.index(name)
        return float(self.coefficients[i]), float(self.standard_errors[i])

    def odds_ratio(self, name: str) -> OddsRatioCI:
        coef, se = self.coefficient(name)
        return OddsRatioCI(
            math.exp(coef), math.exp(coef - 1.96 * se), math.exp(coef + 1.96 * se)
        )


def design_matrix(
    table: CohortTable, features: Sequence[str], rows: np.ndarray
) -> tuple[np.ndarray, tuple[str, ...]]:
    """Intercept + mean-filled features + indicator columns for in-window missingness."""
    cols = [np.ones(len(rows))]
    names = [INTERCEPT]
    for f in features:
        x = table.column(f)[rows]
        nan = np.isnan(x)
        if nan.all():
            raise ValueError(f"feature {f!r} is missing for every selected row")
        if nan.any():
            filled = np.where(nan, x[~nan].mean(), x)
            cols.append(filled)
            names.append(f)
            cols.append(nan.astype(np.float64))
            names.append(f + MISSING_SUFFIX)
        else:
            cols.append(x)
            names.append(f)
    return np.column_stack(cols), tuple(names)


def logistic_score(X: np.ndarray, y: np.ndarray, beta: np.ndarray, ridge: float) -> np.ndarray:
    """Gradient of the ridge-penalized log-likelihood."""
    p = sigmoid(X @ beta)
    return X.T @ (y - p) - ridge * beta


def penalized_loglik(X: np.ndarray, y: np.ndarray, beta: np.ndarray, ridge: float) -> float:
    z = X @ beta
    ll = float(np.sum(y * z - np.logaddexp(0.0, z)))
    return ll - 0.5 * ridge * float(beta @ beta)


def fit_logistic(
    table: CohortTable,
    features: Sequence[str],
    window: tuple[float, float | None] = (0.0, None),
    ridge: float = 1e-8,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> LogisticFit:
    """IRLS logistic fit on rows with admission day in [window_lo, window_hi).

    Convergence requires max|score| < tol * n; failure to converge (e.g. perfect
    separation, where the ridge bounds the coefficients) is reported via the
    flag, never silently.
    """
    lo, hi = window
    days = table.days
    y_all = table.outcomes
    mask = (days >= lo) & ~np.isnan(days) & ~np.isnan(y_all)
    if hi is not None and math.isfinite(hi):
        mask &= days < hi
    rows = np.flatnonzero(mask)
    if len(rows) == 0:
        raise ValueError(f"window [{lo}, {hi}) selects no rows")
    y = y_all[rows]
    if (y == 1).sum() == 0 or (y == 0).sum() == 0:
        raise ValueError(f"window [{lo}, {hi}) has a single outcome class")

    X, names = design_matrix(table, features, rows)
    n, k = X.shape
    beta = np.zeros(k)
    converged = False
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        score = logistic_score(X, y, beta, ridge)
        if np.max(np.abs(score)) < tol * n:
            converged = True
            break
        p = sigmoid(X @ beta)
        w = np.clip(p * (1.0 - p), 1e-10, None)
        H = (X * w[:, None]).T @ X + ridge * np.eye(k)
        step = np.linalg.solve(H, score)
        # halve the step until the penalized likelihood does not decrease
        ll0 = penalized_loglik(X, y, beta, ridge)
        scale = 1.0
        for _ in range(30):
            cand = beta + scale * step
            if penalized_loglik(X, y, cand, ridge) >= ll0 - 1e-12:
                break
            scale /= 2.0
        beta = beta + scale * step
    else:
        iterations = max_iter
    # final check after the last update
    if not converged and np.max(np.abs(logistic_score(X, y, beta, ridge))) < tol * n:
        converged = True

    p = sigmoid(X @ beta)
    w = np.clip(p * (1.0 - p), 1e-10, None)
    H = (X * w[:, None]).T @ X + ridge * np.eye(k)
    cov = np.linalg.inv(H)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return LogisticFit(
        feature_names=names,
        coefficients=beta,
        standard_errors=se,
        converged=converged,
        iterations=iterations,
        window=(float(lo), float(hi) if hi is not None else math.inf),
        n_rows=n,
        ridge=ridge,
    )


@dataclass
class BaselineCell:
    n: int = 0
    estimate: OddsRatioCI | None = None
    converged: bool = True
    error: str | None = None


@dataclass
class BaselineRow:
    biomarker: str
    group: str = ""
    rule: str = ""
    univariable: OddsRatioCI | None = None
    windows: list[BaselineCell] = field(default_factory=list)


@dataclass
class BaselineTable:
    windows: list[tuple[float, float]]
    rows: list[BaselineRow]
    confounders: tuple[str, ...]

    def to_json_dict(self) -> dict:
        def ci(e):
            if e is None:
                return None
            return {"or": e.odds_ratio, "lower95": e.lower95, "upper95": e.upper95}

        return {
            "windows": [[w[0], w[1] if math.isfinite(w[1]) else None] for w in self.windows],
            "confounders": list(self.confounders),
            "rows": [
                {
                    "biomarker": r.biomarker,
                    "group": r.group,
                    "rule": r.rule,
                    "univariable": ci(r.univariable),
                    "windows": [
                        {
                            "n": c.n,
                            "estimate": ci(c.estimate),
                            "converged": c.converged,
                            "error": c.error,
                        }
                        for c in r.windows
                    ],
                }
                for r in self.rows
            ],
        }

    def to_csv(self, path):
        def fmt(e):
            if e is None:
                return ["", "", ""]
            return [repr(e.odds_ratio), repr(e.lower95), repr(e.upper95)]

        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            header = ["group", "biomarker", "rule", "uni_or", "uni_lower95", "uni_upper95"]
            for i, win in enumerate(self.windows, 1):
                hi = "inf" if not math.isfinite(win[1]) else f"{win[1]:g}"
                tag = f"lr{i}_{win[0]:g}_{hi}"
                header += [f"{tag}_n", f"{tag}_or", f"{tag}_lower95", f"{tag}_upper95"]
            w.writerow(header)
            for r in self.rows:
                row = [r.group, r.biomarker, r.rule] + fmt(r.univariable)
                for c in r.windows:
                    row += [c.n] + fmt(c.estimate)
                w.writerow(row)

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def parse_windows(spec: str) -> list[tuple[float, float]]:
    """Parse '0:100,100:300,300:' into [lo, hi) windows; empty hi means open-ended."""
    out = []
    for part in spec.split(","):
        lo_s, hi_s = part.split(":")
        lo = float(lo_s)
        hi = math.inf if hi_s == "" else float(hi_s)
        out.append((lo, hi))
    return out


DEFAULT_WINDOWS = [(0.0, 100.0), (100.0, 300.0), (300.0, math.inf)]


def check_window_partition(table: CohortTable, windows: Sequence[tuple[float, float]]):
    days = table.days
    counts = np.zeros(table.n_rows, dtype=np.int64)
    for lo, hi in windows:
        m = (days >= lo) & (days < hi)
        counts += m.astype(np.int64)
    if (counts > 1).any():
        raise ValueError("windows overlap")
    if (counts == 0).any():
        uncovered = np.unique(days[counts == 0])
        raise ValueError(f"windows do not cover observed days, e.g. {uncovered[:5].tolist()}")


def windowed_or_table(
    table: CohortTable,
    biomarkers: Sequence[str],
    windows: Sequence[tuple[float, float]] | None = None,
    confounders: Sequence[str] | None = None,
    groups: dict[str, str] | None = None,
    rules: dict[str, str] | None = None,
) -> BaselineTable:
    """One logistic fit per admission-day window over biomarkers plus confounders,
    reported per biomarker next to the whole-cohort univariable OR.

    The default confounder set is every modeled feature except admission day, so
    the regression adjusts for the same inputs the additive model sees.
    """
    windows = list(windows) if windows is not None else list(DEFAULT_WINDOWS)
    check_window_partition(table, windows)
    if confounders is None:
        day = table.schema.day_feature
        confounders = [f for f in table.model_features() if f != day]
    covariates = list(dict.fromkeys(list(biomarkers) + [c for c in confounders]))

    fits: list[LogisticFit | None] = []
    errors: list[str | None] = []
    ns: list[int] = []
    for lo, hi in windows:
        try:
            fit = fit_logistic(table, covariates, window=(lo, hi))
            fits.append(fit)
            errors.append(None)
            ns.append(fit.n_rows)
        except ValueError as exc:
            fits.append(None)
            errors.append(str(exc))
            days = table.days
            m = (days >= lo) & (days < hi)
            ns.append(int(m.sum()))

    rows = []
    for b in biomarkers:
        row = BaselineRow(
            biomarker=b,
            group=(groups or {}).get(b, ""),
            rule=(rules or {}).get(b, ""),
            univariable=univariable_or(table, b),
        )
        for fit, err, n in zip(fits, errors, ns):
            if fit is None:
                row.windows.append(BaselineCell(n=n, estimate=None, error=err))
            else:
                row.windows.append(
                    BaselineCell(n=n, estimate=fit.odds_ratio(b), converged=fit.converged)
                )
        rows.append(row)
    return BaselineTable(windows=windows, rows=rows, confounders=tuple(covariates))
