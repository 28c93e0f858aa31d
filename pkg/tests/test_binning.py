import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvrisk.binning import BinMap, build_bins


def test_four_values_two_bins_cuts_at_midpoint():
    bm = build_bins([1.0, 2.0, 3.0, 4.0], max_bins=2)
    assert bm.edges.tolist() == [2.5]


def test_constant_column_has_single_bin():
    bm = build_bins([5.0, 5.0, 5.0, 5.0], max_bins=8)
    assert len(bm.edges) == 0
    assert bm.n_regular == 1


def test_log_transform_preserves_assignment():
    raw = np.array([1.0, 10.0, 100.0, 1000.0])
    a = build_bins(raw, max_bins=3).assign(raw)
    b = build_bins(np.log10(raw), max_bins=3).assign(np.log10(raw))
    assert np.array_equal(a, b)


def test_bin_index_is_count_of_edges_at_most_value():
    bm = BinMap("x", np.array([1.0, 2.5, 7.0]), 0.0, 10.0)
    for v in (-3.0, 1.0, 1.5, 2.5, 6.9, 7.0, 99.0):
        assert bm.assign(v) == int(np.sum(bm.edges <= v))


def test_missing_routes_to_missing_bin():
    bm = build_bins([1.0, 2.0, np.nan, 4.0], max_bins=4)
    idx = bm.assign([np.nan, 1.0])
    assert idx[0] == bm.missing_index
    assert idx[1] < bm.n_regular


def test_all_missing_rejected():
    with pytest.raises(ValueError, match="all values missing"):
        build_bins([np.nan, np.nan], max_bins=4)


def test_respects_max_bins():
    rng = np.random.default_rng(0)
    col = rng.normal(size=500)
    for k in (1, 2, 5, 16):
        bm = build_bins(col, max_bins=k)
        assert bm.n_regular <= k


def test_deterministic_for_fixed_input():
    rng = np.random.default_rng(1)
    col = rng.normal(size=200)
    a = build_bins(col, max_bins=8)
    b = build_bins(col, max_bins=8)
    assert np.array_equal(a.edges, b.edges)


MONOTONE = [
    ("exp", np.exp),
    ("affine", lambda v: 3.0 * v + 1.0),
    ("cube", lambda v: v**3),
    ("atan", np.arctan),
]


@settings(max_examples=60, deadline=None)
@given(
    values=st.lists(
        st.floats(min_value=-50, max_value=50, allow_nan=False), min_size=1, max_size=120
    ),
    max_bins=st.integers(min_value=1, max_value=12),
    which=st.integers(min_value=0, max_value=len(MONOTONE) - 1),
)
def test_monotone_transform_invariance(values, max_bins, which):
    col = np.asarray(values)
    _, fn = MONOTONE[which]
    transformed = fn(col)
    a = build_bins(col, max_bins).assign(col)
    b = build_bins(transformed, max_bins).assign(transformed)
    assert np.array_equal(a, b)
