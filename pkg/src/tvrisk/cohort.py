"""Cohort tables: schema-validated CSV loading, exclusion rules, biomarker binarization.

All transforms are pure: they return new tables and never mutate their input.
Missing values are NaN internally and empty cells in CSV; no numeric sentinels
are accepted.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Mapping

import numpy as np

log = logging.getLogger(__name__)

FEATURE_KINDS = ("continuous", "binary", "categorical")
FEATURE_ROLES = (
    "demographic",
    "comorbidity",
    "outpatient_med",
    "vital",
    "lab",
    "admission_day",
    "outcome",
)

ID_COLUMN = "patient_id"


class CohortError(ValueError):
    """Schema violation or malformed cohort data."""


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str
    unit: str = ""
    role: str = "lab"

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise CohortError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in FEATURE_ROLES:
            raise CohortError(f"feature {self.name!r}: unknown role {self.role!r}")
        if not self.name or self.name == ID_COLUMN:
            raise CohortError(f"invalid feature name {self.name!r}")


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[Feature, ...]

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise CohortError(f"duplicate feature names: {dupes}")
        for role in ("admission_day", "outcome"):
            n = sum(1 for f in self.features if f.role == role)
            if n != 1:
                raise CohortError(f"schema must have exactly one {role} feature, found {n}")

    @cached_property
    def by_name(self) -> dict[str, Feature]:
        return {f.name: f for f in self.features}

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    @cached_property
    def day_feature(self) -> str:
        return next(f.name for f in self.features if f.role == "admission_day")

    @cached_property
    def outcome_feature(self) -> str:
        return next(f.name for f in self.features if f.role == "outcome")

    def extend(self, new: Iterable[Feature]) -> "FeatureSchema":
        return FeatureSchema(self.features + tuple(new))

    def to_json_dict(self) -> dict:
        return {
            "features": [
                {"name": f.name, "kind": f.kind, "unit": f.unit, "role": f.role}
                for f in self.features
            ]
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "FeatureSchema":
        try:
            feats = tuple(
                Feature(e["name"], e["kind"], e.get("unit", ""), e.get("role", "lab"))
                for e in d["features"]
            )
        except (KeyError, TypeError) as exc:
            raise CohortError(f"bad schema JSON: {exc}") from exc
        return cls(feats)


def load_schema(path) -> FeatureSchema:
    with open(path, encoding="utf-8") as fh:
        return FeatureSchema.from_json_dict(json.load(fh))


def save_schema(schema: FeatureSchema, path, model_excluded: frozenset[str] = frozenset()):
    d = schema.to_json_dict()
    if model_excluded:
        d["excluded_from_model"] = sorted(model_excluded)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(d, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_schema_with_exclusions(path) -> tuple[FeatureSchema, frozenset[str]]:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    return FeatureSchema.from_json_dict(d), frozenset(d.get("excluded_from_model", ()))


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    admission_day: int
    outcome_death: int | None
    values: dict[str, float]

    def get(self, feature: str) -> float | None:
        v = self.values.get(feature)
        if v is None or (isinstance(v, float) and math.isnan(v)):
            return None
        return v


@dataclass(frozen=True)
class CohortTable:
    """Columnar patient table. Columns are float64 arrays with NaN for missing."""

    schema: FeatureSchema
    patient_ids: tuple[str, ...]
    columns: dict[str, np.ndarray]
    provenance: tuple[str, ...] = ()
    model_excluded: frozenset[str] = frozenset()

    def __post_init__(self):
        n = len(self.patient_ids)
        for name in self.schema.names:
            col = self.columns.get(name)
            if col is None:
                raise CohortError(f"missing column for feature {name!r}")
            if len(col) != n:
                raise CohortError(f"column {name!r} has {len(col)} rows, expected {n}")

    @property
    def n_rows(self) -> int:
        return len(self.patient_ids)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise CohortError(f"unknown feature {name!r}") from None

    @property
    def days(self) -> np.ndarray:
        return self.columns[self.schema.day_feature]

    @property
    def outcomes(self) -> np.ndarray:
        return self.columns[self.schema.outcome_feature]

    def missing_rate(self, name: str) -> float:
        col = self.column(name)
        return float(np.isnan(col).mean()) if len(col) else 0.0

    def model_features(self) -> tuple[str, ...]:
        """Features eligible for modeling: everything but the outcome and
        columns flagged excluded-from-model (binarization sources, leakage columns)."""
        out = self.schema.outcome_feature
        return tuple(
            f.name
            for f in self.schema.features
            if f.name != out and f.name not in self.model_excluded
        )

    def record(self, i: int) -> PatientRecord:
        day = self.days[i]
        outcome = self.outcomes[i]
        values = {name: float(self.columns[name][i]) for name in self.schema.names}
        return PatientRecord(
            patient_id=self.patient_ids[i],
            admission_day=int(day) if not math.isnan(day) else -1,
            outcome_death=int(outcome) if not math.isnan(outcome) else None,
            values=values,
        )

    def records(self) -> Iterator[PatientRecord]:
        return (self.record(i) for i in range(self.n_rows))

    def take(self, indices) -> "CohortTable":
        idx = np.asarray(indices, dtype=np.intp)
        return CohortTable(
            schema=self.schema,
            patient_ids=tuple(self.patient_ids[i] for i in idx),
            columns={k: v[idx] for k, v in self.columns.items()},
            provenance=self.provenance,
            model_excluded=self.model_excluded,
        )

    def replaced(self, **changes) -> "CohortTable":
        d = {
            "schema": self.schema,
            "patient_ids": self.patient_ids,
            "columns": self.columns,
            "provenance": self.provenance,
            "model_excluded": self.model_excluded,
        }
        d.update(changes)
        return CohortTable(**d)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            names = self.schema.names
            w.writerow((ID_COLUMN,) + names)
            cols = [self.columns[n] for n in names]
            for i in range(self.n_rows):
                row = [self.patient_ids[i]]
                for col in cols:
                    v = col[i]
                    row.append("" if math.isnan(v) else _format_cell(v))
                w.writerow(row)


def _format_cell(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _parse_cell(text: str, feature: Feature, row: int) -> float:
    s = text.strip()
    if s == "":
        return math.nan
    try:
        v = float(s)
    except ValueError:
        raise CohortError(
            f"row {row}, column {feature.name!r}: non-numeric value {text!r}"
        ) from None
    if not math.isfinite(v):
        raise CohortError(f"row {row}, column {feature.name!r}: non-finite value {text!r}")
    if feature.kind == "binary" and v not in (0.0, 1.0):
        raise CohortError(
            f"row {row}, column {feature.name!r}: binary feature has value {text!r}, expected 0 or 1"
        )
    if feature.role == "admission_day" and not math.isnan(v):
        if v < 0 or v != int(v):
            raise CohortError(
                f"row {row}, column {feature.name!r}: admission day must be a non-negative "
                f"integer, got {text!r}"
            )
    return v


def load_cohort(source, schema: FeatureSchema) -> CohortTable:
    """Parse a cohort CSV (UTF-8, header row, empty cell = missing).

    `source` may be a path or a text/byte stream. The header must contain every
    schema feature exactly once, plus an optional leading patient_id column;
    unknown columns are an error. Errors name the offending data row (1-based)
    and column.
    """
    if hasattr(source, "read"):
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        fh = io.StringIO(text)
        close = False
    else:
        fh = open(source, encoding="utf-8", newline="")
        close = True
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortError("empty CSV: no header row") from None
        header = [h.strip() for h in header]
        has_id = bool(header) and header[0] == ID_COLUMN
        feature_header = header[1:] if has_id else header

        known = set(schema.names)
        unknown = [h for h in feature_header if h not in known]
        if unknown:
            raise CohortError(f"unknown columns in CSV header: {unknown}")
        missing = [n for n in schema.names if n not in feature_header]
        if missing:
            raise CohortError(f"columns missing from CSV header: {missing}")
        if len(set(feature_header)) != len(feature_header):
            raise CohortError("duplicate columns in CSV header")

        feats = [schema.by_name[h] for h in feature_header]
        ids: list[str] = []
        cells: list[list[float]] = []
        expected = len(header)
        for rownum, row in enumerate(reader, start=1):
            if len(row) != expected:
                raise CohortError(
                    f"row {rownum}: expected {expected} cells, got {len(row)}"
                )
            if has_id:
                ids.append(row[0])
                data = row[1:]
            else:
                ids.append(f"row-{rownum:06d}")
                data = row
            cells.append([_parse_cell(c, f, rownum) for c, f in zip(data, feats)])
    finally:
        if close:
            fh.close()

    n = len(cells)
    matrix = (
        np.array(cells, dtype=np.float64) if n else np.empty((0, len(feats)), dtype=np.float64)
    )
    columns = {f.name: np.ascontiguousarray(matrix[:, j]) for j, f in enumerate(feats)}
    return CohortTable(
        schema=schema,
        patient_ids=tuple(ids),
        columns=columns,
        provenance=("loaded",),
    )


@dataclass(frozen=True)
class ExclusionConfig:
    pregnancy_indicator_features: tuple[str, ...] = ()
    surgery_indicator_features: tuple[str, ...] = ()
    required_features: tuple[str, ...] = ()
    min_survival_hours: float = 6.0
    hours_to_death_feature: str | None = None

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "ExclusionConfig":
        return cls(
            pregnancy_indicator_features=tuple(d.get("pregnancy_indicator_features", ())),
            surgery_indicator_features=tuple(d.get("surgery_indicator_features", ())),
            required_features=tuple(d.get("required_features", ())),
            min_survival_hours=float(d.get("min_survival_hours", 6.0)),
            hours_to_death_feature=d.get("hours_to_death_feature"),
        )


@dataclass
class ExclusionReport:
    input_rows: int
    removed: list[tuple[str, int]] = field(default_factory=list)
    retained: int = 0
    notes: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "input_rows": self.input_rows,
            "removed": [{"rule": r, "count": c} for r, c in self.removed],
            "retained": self.retained,
            "notes": list(self.notes),
        }


def apply_exclusions(
    table: CohortTable, cfg: ExclusionConfig
) -> tuple[CohortTable, ExclusionReport]:
    """Drop rows per the fixed rule order: pregnancy, surgery, required fields, early death.

    Each rule's removal count is measured against the rows surviving the previous
    rules. The hours-to-death column, when configured, is flagged
    excluded-from-model afterwards since it encodes the outcome.
    """
    referenced = (
        cfg.pregnancy_indicator_features
        + cfg.surgery_indicator_features
        + cfg.required_features
        + ((cfg.hours_to_death_feature,) if cfg.hours_to_death_feature else ())
    )
    unknown = [n for n in referenced if n not in table.schema.by_name]
    if unknown:
        raise CohortError(f"exclusion config references unknown features: {unknown}")

    report = ExclusionReport(input_rows=table.n_rows)
    keep = np.ones(table.n_rows, dtype=bool)

    def flag_any(names: tuple[str, ...]) -> np.ndarray:
        hit = np.zeros(table.n_rows, dtype=bool)
        for n in names:
            col = table.column(n)
            hit |= col == 1.0
        return hit

    def apply_rule(name: str, hit: np.ndarray):
        nonlocal keep
        removed = int((hit & keep).sum())
        report.removed.append((name, removed))
        keep &= ~hit

    apply_rule("pregnancy_indicators", flag_any(cfg.pregnancy_indicator_features))
    apply_rule("surgery_indicators", flag_any(cfg.surgery_indicator_features))

    missing_required = np.zeros(table.n_rows, dtype=bool)
    for n in cfg.required_features:
        missing_required |= np.isnan(table.column(n))
    apply_rule("required_fields_missing", missing_required)

    excluded = set(table.model_excluded)
    if cfg.hours_to_death_feature is None:
        report.removed.append(("early_death", 0))
        report.notes.append(
            "early-death rule skipped: no hours-to-death column configured"
        )
        log.warning("early-death exclusion skipped: no hours-to-death column configured")
    else:
        hours = table.column(cfg.hours_to_death_feature)
        early = ~np.isnan(hours) & (hours < cfg.min_survival_hours)
        apply_rule("early_death", early)
        excluded.add(cfg.hours_to_death_feature)
        report.notes.append(
            f"column {cfg.hours_to_death_feature!r} flagged excluded-from-model"
        )

    report.retained = int(keep.sum())
    out = table.take(np.flatnonzero(keep)).replaced(
        provenance=table.provenance + ("exclusions",),
        model_excluded=frozenset(excluded),
    )
    return out, report


@dataclass(frozen=True)
class BinarizationRule:
    feature: str
    direction: str  # greater_than | less_than
    threshold: float
    derived_name: str

    def __post_init__(self):
        if self.direction not in ("greater_than", "less_than"):
            raise CohortError(f"rule {self.derived_name!r}: bad direction {self.direction!r}")
        if not math.isfinite(self.threshold):
            raise CohortError(f"rule {self.derived_name!r}: non-finite threshold")

    def evaluate(self, values: np.ndarray) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            if self.direction == "greater_than":
                hit = values > self.threshold
            else:
                hit = values < self.threshold
        out = hit.astype(np.float64)
        out[np.isnan(values)] = np.nan
        return out

    def to_json_dict(self) -> dict:
        return {
            "feature": self.feature,
            "direction": self.direction,
            "threshold": self.threshold,
            "derived_name": self.derived_name,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "BinarizationRule":
        return cls(d["feature"], d["direction"], float(d["threshold"]), d["derived_name"])


def apply_binarization(table: CohortTable, rules: list[BinarizationRule]) -> CohortTable:
    """Add one binary derived feature per rule (strict comparison), propagate
    missingness, and flag each source column excluded-from-model."""
    derived = [r.derived_name for r in rules]
    if len(set(derived)) != len(derived):
        dupes = sorted({d for d in derived if derived.count(d) > 1})
        raise CohortError(f"duplicate derived names: {dupes}")
    clash = [d for d in derived if d in table.schema.by_name]
    if clash:
        raise CohortError(f"derived names already in schema: {clash}")

    new_features = []
    new_columns = dict(table.columns)
    for rule in rules:
        src = table.schema.by_name.get(rule.feature)
        if src is None:
            raise CohortError(f"binarization rule references unknown feature {rule.feature!r}")
        if src.kind != "continuous":
            raise CohortError(
                f"binarization source {rule.feature!r} must be continuous, is {src.kind}"
            )
        new_features.append(Feature(rule.derived_name, "binary", "", src.role))
        new_columns[rule.derived_name] = rule.evaluate(table.column(rule.feature))

    return CohortTable(
        schema=table.schema.extend(new_features),
        patient_ids=table.patient_ids,
        columns=new_columns,
        provenance=table.provenance + ("binarization",),
        model_excluded=table.model_excluded | {r.feature for r in rules},
    )


def load_rules(path) -> list[BinarizationRule]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    items = data["rules"] if isinstance(data, dict) else data
    return [BinarizationRule.from_json_dict(e) for e in items]
