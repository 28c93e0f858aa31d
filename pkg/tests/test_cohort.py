import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvrisk.cohort import (
    BinarizationRule,
    CohortError,
    ExclusionConfig,
    Feature,
    FeatureSchema,
    apply_binarization,
    apply_exclusions,
    load_cohort,
)

SCHEMA = FeatureSchema(
    (
        Feature("age", "continuous", "years", "demographic"),
        Feature("ferritin", "continuous", "ug/L", "lab"),
        Feature("prenatal_vitamins", "binary", "", "outpatient_med"),
        Feature("laxatives", "binary", "", "outpatient_med"),
        Feature("hours_to_death", "continuous", "hours", "lab"),
        Feature("admission_day", "continuous", "days", "admission_day"),
        Feature("death", "binary", "", "outcome"),
    )
)


def parse(text):
    return load_cohort(io.StringIO(text), SCHEMA)


HEADER = "patient_id,age,ferritin,prenatal_vitamins,laxatives,hours_to_death,admission_day,death"


def test_empty_cell_is_missing():
    table = parse(
        f"{HEADER}\n"
        "a,60,120,0,0,,10,0\n"
        "b,70,,0,0,,11,1\n"
        "c,50,300,0,0,,12,0\n"
    )
    assert table.n_rows == 3
    assert table.missing_rate("ferritin") == pytest.approx(1 / 3)
    assert table.patient_ids == ("a", "b", "c")


def test_bad_outcome_names_row_and_column():
    with pytest.raises(CohortError, match=r"row 2.*'death'.*2"):
        parse(f"{HEADER}\na,60,120,0,0,,10,0\nb,70,200,0,0,,11,2\n")


def test_non_numeric_cell_names_row_and_column():
    with pytest.raises(CohortError, match=r"row 1.*'age'"):
        parse(f"{HEADER}\na,sixty,120,0,0,,10,0\n")


def test_unknown_and_missing_columns_rejected():
    with pytest.raises(CohortError, match="unknown columns"):
        parse(HEADER + ",extra\na,60,120,0,0,,10,0,1\n")
    with pytest.raises(CohortError, match="missing from CSV header"):
        parse("patient_id,age\na,60\n")


def test_ragged_row_rejected():
    with pytest.raises(CohortError, match="row 1"):
        parse(f"{HEADER}\na,60,120,0,0,,10\n")


def test_negative_admission_day_rejected():
    with pytest.raises(CohortError, match="admission day"):
        parse(f"{HEADER}\na,60,120,0,0,,-4,0\n")


def test_missing_patient_id_column_synthesizes_ids():
    table = load_cohort(
        io.StringIO(
            "age,ferritin,prenatal_vitamins,laxatives,hours_to_death,admission_day,death\n"
            "60,120,0,0,,10,0\n"
        ),
        SCHEMA,
    )
    assert table.patient_ids == ("row-000001",)


def test_large_structural_load(tmp_path):
    # 45 feature columns plus id and outcome, 11080 rows
    feats = [Feature(f"f{i:02d}", "continuous", "", "lab") for i in range(44)]
    feats.append(Feature("day", "continuous", "days", "admission_day"))
    feats.append(Feature("died", "binary", "", "outcome"))
    schema = FeatureSchema(tuple(feats))
    assert len(schema.features) == 46  # 45 features + outcome
    path = tmp_path / "big.csv"
    rng = np.random.default_rng(0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id"] + [f.name for f in feats])
        for i in range(11080):
            row = [f"p{i}"] + [f"{v:.3f}" for v in rng.normal(size=44)]
            row += [str(int(rng.integers(0, 527))), str(int(rng.random() < 0.2))]
            w.writerow(row)
    table = load_cohort(path, schema)
    assert table.n_rows == 11080


EXCL = ExclusionConfig(
    pregnancy_indicator_features=("prenatal_vitamins",),
    surgery_indicator_features=("laxatives",),
    required_features=("age", "admission_day"),
    min_survival_hours=6.0,
    hours_to_death_feature="hours_to_death",
)


def cohort_rows(rows):
    body = "\n".join(rows)
    return parse(f"{HEADER}\n{body}\n")


def test_pregnancy_flag_excludes():
    table = cohort_rows(["a,60,120,1,0,,10,0", "b,61,121,0,0,,11,0"])
    out, report = apply_exclusions(table, EXCL)
    assert out.patient_ids == ("b",)
    assert dict(report.removed)["pregnancy_indicators"] == 1


def test_early_death_excludes():
    table = cohort_rows(["a,60,120,0,0,5,10,1", "b,61,121,0,0,7,11,1", "c,62,122,0,0,,12,0"])
    out, report = apply_exclusions(table, EXCL)
    assert out.patient_ids == ("b", "c")
    assert dict(report.removed)["early_death"] == 1
    assert "hours_to_death" in out.model_excluded


def test_clean_patient_retained():
    table = cohort_rows(["a,60,120,0,0,,10,0"])
    out, report = apply_exclusions(table, EXCL)
    assert out.n_rows == 1
    assert report.retained == 1


def test_rules_count_against_remaining_rows():
    # row a hits both pregnancy and surgery; only pregnancy (first rule) counts it
    table = cohort_rows(["a,60,120,1,1,,10,0", "b,61,121,0,1,,11,0"])
    _, report = apply_exclusions(table, EXCL)
    counts = dict(report.removed)
    assert counts["pregnancy_indicators"] == 1
    assert counts["surgery_indicators"] == 1


def test_exclusion_is_idempotent():
    table = cohort_rows(
        ["a,60,120,1,0,,10,0", "b,,121,0,0,,11,0", "c,62,122,0,0,4,12,1", "d,63,123,0,0,,13,0"]
    )
    once, first = apply_exclusions(table, EXCL)
    twice, second = apply_exclusions(once, EXCL)
    assert twice.patient_ids == once.patient_ids
    assert first.input_rows - sum(c for _, c in first.removed) == first.retained
    assert all(c == 0 for _, c in second.removed)


def test_missing_hours_column_skips_rule():
    cfg = ExclusionConfig(required_features=("age",))
    table = cohort_rows(["a,60,120,0,0,2,10,1"])
    out, report = apply_exclusions(table, cfg)
    assert out.n_rows == 1
    assert dict(report.removed)["early_death"] == 0
    assert any("skipped" in note for note in report.notes)


def test_unknown_feature_in_config_rejected():
    table = cohort_rows(["a,60,120,0,0,,10,0"])
    with pytest.raises(CohortError, match="unknown features"):
        apply_exclusions(table, ExclusionConfig(required_features=("nope",)))


def test_binarization_strict_comparisons():
    table = cohort_rows(["a,60,1500,0,0,,10,0", "b,61,45.0,0,0,,11,0", "c,62,,0,0,,12,0"])
    rules = [
        BinarizationRule("ferritin", "greater_than", 1000.0, "high_ferritin"),
        BinarizationRule("ferritin", "greater_than", 45.0, "ferritin_gt_45"),
        BinarizationRule("ferritin", "less_than", 45.0, "ferritin_lt_45"),
    ]
    out = apply_binarization(table, rules)
    hf = out.column("high_ferritin")
    assert hf[0] == 1.0 and hf[1] == 0.0 and math.isnan(hf[2])
    # value exactly at the threshold satisfies neither strict comparison
    assert out.column("ferritin_gt_45")[1] == 0.0
    assert out.column("ferritin_lt_45")[1] == 0.0
    assert "ferritin" in out.model_excluded
    assert out.patient_ids == table.patient_ids


def test_duplicate_derived_names_rejected():
    table = cohort_rows(["a,60,120,0,0,,10,0"])
    rules = [
        BinarizationRule("ferritin", "greater_than", 10.0, "x"),
        BinarizationRule("age", "less_than", 70.0, "x"),
    ]
    with pytest.raises(CohortError, match="duplicate derived names"):
        apply_binarization(table, rules)


def test_binarization_requires_continuous_source():
    table = cohort_rows(["a,60,120,0,0,,10,0"])
    with pytest.raises(CohortError, match="must be continuous"):
        apply_binarization(table, [BinarizationRule("death", "greater_than", 0.5, "d2")])


@settings(max_examples=50, deadline=None)
@given(
    values=st.lists(
        st.one_of(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), st.none()),
        min_size=1,
        max_size=40,
    ),
    threshold=st.floats(min_value=-1e5, max_value=1e5, allow_nan=False),
    greater=st.booleans(),
)
def test_derived_matches_direct_recompute(values, threshold, greater):
    col = np.array([np.nan if v is None else v for v in values], dtype=np.float64)
    rule = BinarizationRule(
        "x", "greater_than" if greater else "less_than", threshold, "x_rule"
    )
    derived = rule.evaluate(col)
    for v, d in zip(col, derived):
        if math.isnan(v):
            assert math.isnan(d)
        else:
            expected = (v > threshold) if greater else (v < threshold)
            assert d == float(expected)


def test_csv_round_trip(tmp_path):
    table = cohort_rows(["a,60.5,120,1,0,,10,0", "b,61,,0,1,3.5,11,1"])
    path = tmp_path / "out.csv"
    table.to_csv(path)
    back = load_cohort(path, SCHEMA)
    assert back.patient_ids == table.patient_ids
    for name in SCHEMA.names:
        np.testing.assert_array_equal(back.column(name), table.column(name))
