import numpy as np
import pytest

from tvrisk.cohort import CohortTable, Feature, FeatureSchema


def make_table(columns, outcome, days, roles=None, kinds=None, model_excluded=()):
    """Build an in-memory cohort table from plain arrays (NaN = missing)."""
    roles = roles or {}
    kinds = kinds or {}
    feats = []
    cols = {}
    for name, values in columns.items():
        arr = np.asarray(values, dtype=np.float64)
        kind = kinds.get(name)
        if kind is None:
            finite = arr[~np.isnan(arr)]
            kind = "binary" if np.isin(finite, (0.0, 1.0)).all() and len(finite) else "continuous"
        feats.append(Feature(name, kind, "", roles.get(name, "lab")))
        cols[name] = arr
    feats.append(Feature("admission_day", "continuous", "days", "admission_day"))
    feats.append(Feature("outcome", "binary", "", "outcome"))
    cols["admission_day"] = np.asarray(days, dtype=np.float64)
    cols["outcome"] = np.asarray(outcome, dtype=np.float64)
    n = len(cols["outcome"])
    return CohortTable(
        schema=FeatureSchema(tuple(feats)),
        patient_ids=tuple(f"p{i:05d}" for i in range(n)),
        columns=cols,
        model_excluded=frozenset(model_excluded),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
