"""Command-line pipeline: validate -> exclude -> binarize -> train -> effects/baseline/roc,
plus synthetic-cohort generation and evaluation.

Every subcommand prints a one-line JSON summary to stdout. Exit codes: 0 ok,
1 usage error, 2 data error, 3 numeric failure under --strict.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import baselines, effects, metrics, plotting, synth
from .bagging import as_ensemble, fit_bagged, load_model, save_model, shape_with_ci
from .cohort import (
    CohortError,
    ExclusionConfig,
    apply_binarization,
    apply_exclusions,
    load_cohort,
    load_rules,
    load_schema_with_exclusions,
    save_schema,
)
from .gam import GamConfig, sigmoid


class UsageError(Exception):
    exit_code = 1


class DataError(Exception):
    exit_code = 2


class NumericError(Exception):
    exit_code = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_table(cohort_path, schema_path):
    schema, excluded = load_schema_with_exclusions(schema_path)
    table = load_cohort(cohort_path, schema)
    if excluded:
        table = table.replaced(model_excluded=frozenset(excluded))
    return table


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _gam_config(args) -> GamConfig:
    kwargs = {"rng_seed": args.seed}
    for flag, field in [
        ("bins", "max_bins"),
        ("day_bins", "day_bins"),
        ("learning_rate", "learning_rate"),
        ("rounds_main", "boosting_rounds_main"),
        ("rounds_interaction", "boosting_rounds_interaction"),
        ("max_leaves", "max_leaves"),
        ("bags", "bag_count"),
        ("bag_fraction", "bag_fraction"),
        ("patience", "early_stop_patience"),
    ]:
        v = getattr(args, flag, None)
        if v is not None:
            kwargs[field] = v
    try:
        return GamConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _interaction_features(table, spec: str) -> list[str]:
    if spec == "none":
        return []
    modeled = set(table.model_features())
    if spec == "auto":
        return [
            f.name
            for f in table.schema.features
            if f.name in modeled and f.kind == "binary" and f.role == "lab"
        ]
    names = [s for s in spec.split(",") if s]
    unknown = [n for n in names if n not in modeled]
    if unknown:
        raise DataError(f"interaction features not modelable: {unknown}")
    return names


def _summary(payload: dict) -> int:
    print(json.dumps(payload, sort_keys=True))
    return 0


def cmd_validate(args) -> int:
    table = _load_table(args.cohort, args.schema)
    missing = {n: round(table.missing_rate(n), 6) for n in table.schema.names}
    return _summary(
        {
            "command": "validate",
            "status": "ok",
            "rows": table.n_rows,
            "features": len(table.schema.features),
            "missing_rates": missing,
        }
    )


def cmd_exclude(args) -> int:
    table = _load_table(args.cohort, args.schema)
    with open(args.exclusions, encoding="utf-8") as fh:
        cfg = ExclusionConfig.from_json_dict(json.load(fh))
    out = _outdir(args)
    filtered, report = apply_exclusions(table, cfg)
    filtered.to_csv(out / "cohort.csv")
    save_schema(filtered.schema, out / "schema.json", filtered.model_excluded)
    with open(out / "exclusion_report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return _summary(
        {
            "command": "exclude",
            "status": "ok",
            "input_rows": report.input_rows,
            "retained": report.retained,
            "removed": {rule: n for rule, n in report.removed},
            "artifacts": [str(out / "cohort.csv"), str(out / "schema.json"),
                          str(out / "exclusion_report.json")],
        }
    )


def cmd_binarize(args) -> int:
    table = _load_table(args.cohort, args.schema)
    rules = load_rules(args.rules)
    out = _outdir(args)
    derived = apply_binarization(table, rules)
    derived.to_csv(out / "cohort.csv")
    save_schema(derived.schema, out / "schema.json", derived.model_excluded)
    return _summary(
        {
            "command": "binarize",
            "status": "ok",
            "rows": derived.n_rows,
            "derived": [r.derived_name for r in rules],
            "artifacts": [str(out / "cohort.csv"), str(out / "schema.json")],
        }
    )


def cmd_train(args) -> int:
    table = _load_table(args.cohort, args.schema)
    cfg = _gam_config(args)
    inter = _interaction_features(table, args.interactions)
    out = _outdir(args)
    ensemble = fit_bagged(table, cfg, interaction_features=inter, n_jobs=args.threads)
    save_model(ensemble, out / "model.json")

    result = metrics.auc_with_se_oob(ensemble, table)
    report = {"oob": result.to_json_dict(), "n_rows": table.n_rows,
              "mortality_rate": float(table.outcomes.mean())}
    if args.cv_folds:
        cv = metrics.auc_with_se_cv(table, cfg, inter, n_folds=args.cv_folds)
        report["cv"] = cv.to_json_dict()
    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    probs = np.mean([sigmoid(m.predict_logit_table(table)) for m in ensemble.members], axis=0)
    with open(out / "risk_scatter.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "admission_day", "predicted_probability", "outcome"])
        days = table.days
        y = table.outcomes
        for i in range(table.n_rows):
            w.writerow([table.patient_ids[i], int(days[i]), repr(float(probs[i])),
                        int(y[i])])
    return _summary(
        {
            "command": "train",
            "status": "ok",
            "bags": ensemble.bag_count,
            "interactions": inter,
            "oob_auc": result.auc,
            "artifacts": [str(out / "model.json"), str(out / "metrics.json"),
                          str(out / "risk_scatter.csv")],
        }
    )


def _default_grid(ensemble) -> list[int]:
    m = ensemble.members[0]
    if m.interactions:
        vmax = next(iter(m.interactions.values())).day_map.vmax
    else:
        vmax = m.bin_maps[m.day_feature].vmax
    return effects.default_day_grid(int(vmax))


def cmd_effects(args) -> int:
    model = load_model(args.model)
    ensemble = as_ensemble(model)
    out = _outdir(args)
    grid = effects.parse_day_grid(args.grid) if args.grid else _default_grid(ensemble)
    artifacts = []

    modes = [bool(args.biomarker), bool(args.group), bool(args.shape)]
    if sum(modes) != 1:
        raise UsageError("choose exactly one of --biomarker, --group, --shape")

    if args.shape:
        band = shape_with_ci(ensemble, args.shape, day=args.day)
        nreg = band.bin_map.n_regular
        shape_csv = out / "shape.csv"
        with open(shape_csv, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "bin", "midpoint", "mean", "lower95", "upper95", "weight"])
            mids = band.midpoints
            for i in range(nreg):
                w.writerow([band.feature, i, repr(float(mids[i])), repr(float(band.mean[i])),
                            repr(float(band.lower[i])), repr(float(band.upper[i])),
                            repr(float(band.weights[i]))])
            w.writerow([band.feature, "missing", "", repr(float(band.mean[nreg])),
                        repr(float(band.lower[nreg])), repr(float(band.upper[nreg])),
                        repr(float(band.weights[nreg]))])
        plotting.shape_band_svg(band, out / "shape.svg")
        artifacts += [str(shape_csv), str(out / "shape.svg")]
        summary = {"command": "effects", "status": "ok", "shape": args.shape,
                   "day": args.day, "artifacts": artifacts}
        if args.suggest_threshold:
            curve = effects.curve_from_band(band)
            threshold, direction = effects.select_threshold(curve)
            doc = {"feature": args.shape, "threshold": threshold, "direction": direction}
            with open(out / "threshold.json", "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=2, sort_keys=True)
                fh.write("\n")
            artifacts.append(str(out / "threshold.json"))
            summary["threshold"] = threshold
            summary["direction"] = direction
        return _summary(summary)

    if args.biomarker:
        series = effects.biomarker_or_series(ensemble, args.biomarker, grid)
    else:
        groups = effects.load_groups(args.groups) if args.groups else None
        if groups is None:
            raise UsageError("--group requires --groups FILE")
        match = [g for g in groups if g.name == args.group]
        if not match:
            raise DataError(f"group {args.group!r} not in {args.groups}")
        series = effects.group_or_series(ensemble, match[0], grid)

    effects.series_to_csv([series], out / "effects.csv")
    effects.series_to_json([series], out / "effects.json")
    plotting.effect_series_svg([series], out / "effects.svg",
                               title=f"mortality odds ratio: {series.subject}")
    artifacts += [str(out / "effects.csv"), str(out / "effects.json"), str(out / "effects.svg")]
    return _summary(
        {
            "command": "effects",
            "status": "ok",
            "subject": series.subject,
            "days": [int(d) for d in series.days[:3]] + (["..."] if len(series.days) > 3 else []),
            "artifacts": artifacts,
        }
    )


def cmd_baseline(args) -> int:
    table = _load_table(args.cohort, args.schema)
    if args.biomarkers == "auto":
        biomarkers = [
            f.name
            for f in table.schema.features
            if f.kind == "binary" and f.role == "lab" and f.name in table.model_features()
        ]
    else:
        biomarkers = [b for b in args.biomarkers.split(",") if b]
    if not biomarkers:
        raise DataError("no biomarkers to analyze")
    windows = baselines.parse_windows(args.windows) if args.windows else None

    groups = rules = None
    if args.groups:
        gs = effects.load_groups(args.groups)
        groups = {m: g.name for g in gs for m in g.members}
    if args.rules:
        rl = load_rules(args.rules)
        rules = {
            r.derived_name: f"{r.feature} {'>' if r.direction == 'greater_than' else '<'} {r.threshold:g}"
            for r in rl
        }
    out = _outdir(args)
    result = baselines.windowed_or_table(
        table, biomarkers, windows=windows, groups=groups, rules=rules
    )
    result.to_csv(out / "baseline_table.csv")
    result.to_json(out / "baseline_table.json")

    unconverged = [
        (r.biomarker, i)
        for r in result.rows
        for i, c in enumerate(r.windows)
        if c.estimate is not None and not c.converged
    ]
    failed = [
        (r.biomarker, i) for r in result.rows for i, c in enumerate(r.windows) if c.error
    ]
    if args.strict and (unconverged or failed):
        raise NumericError(
            f"logistic fits unconverged/failed: {sorted({i for _, i in unconverged + failed})}"
        )
    return _summary(
        {
            "command": "baseline",
            "status": "ok",
            "biomarkers": biomarkers,
            "windows": [[w[0], None if math.isinf(w[1]) else w[1]] for w in result.windows],
            "artifacts": [str(out / "baseline_table.csv"), str(out / "baseline_table.json")],
        }
    )


def cmd_roc(args) -> int:
    model = load_model(args.model)
    ensemble = as_ensemble(model)
    table = _load_table(args.cohort, args.schema)
    out = _outdir(args)
    if args.method == "oob":
        result = metrics.auc_with_se_oob(ensemble, table)
    else:
        inter = sorted(ensemble.members[0].interactions)
        result = metrics.auc_with_se_cv(table, ensemble.config, inter, n_folds=args.folds)
    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(result.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    scores = np.mean(
        [sigmoid(m.predict_logit_table(table)) for m in ensemble.members], axis=0
    )
    fpr, tpr = metrics.roc_points(scores, table.outcomes)
    with open(out / "roc_points.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fpr", "tpr"])
        for a, b in zip(fpr, tpr):
            w.writerow([repr(float(a)), repr(float(b))])
    return _summary(
        {
            "command": "roc",
            "status": "ok",
            "auc": result.auc,
            "se": result.se,
            "method": result.method,
            "artifacts": [str(out / "metrics.json"), str(out / "roc_points.csv")],
        }
    )


def cmd_synth_gen(args) -> int:
    if args.truth:
        truth = synth.load_truth(args.truth)
    else:
        builder = synth.SCENARIOS.get(args.scenario)
        if builder is None:
            raise UsageError(
                f"unknown scenario {args.scenario!r}, have {sorted(synth.SCENARIOS)}"
            )
        truth = builder()
    out = _outdir(args)
    table, truth = synth.generate_cohort(truth, args.n, args.seed)
    table.to_csv(out / "cohort.csv")
    save_schema(table.schema, out / "schema.json", table.model_excluded)
    synth.save_truth(truth, out / "truth.json")
    artifacts = [str(out / "cohort.csv"), str(out / "schema.json"), str(out / "truth.json")]
    if not args.truth and args.scenario == "nyc-like":
        effects.save_groups(synth.nyc_like_groups(), out / "groups.json")
        artifacts.append(str(out / "groups.json"))
    return _summary(
        {
            "command": "synth gen",
            "status": "ok",
            "rows": table.n_rows,
            "mortality_rate": float(table.outcomes.mean()),
            "artifacts": artifacts,
        }
    )


def cmd_synth_eval(args) -> int:
    truth = synth.load_truth(args.truth)
    series_list = effects.series_from_csv(args.series)
    features = [s for s in args.feature.split(",") if s] if args.feature else None
    out = _outdir(args)
    entries = []
    for series in series_list:
        if features is not None and series.subject not in features:
            continue
        try:
            truth.feature(series.subject)
        except KeyError:
            if features is not None:
                raise DataError(f"feature {series.subject!r} absent from truth") from None
            continue
        entries.append(synth.recovery_error(series, truth, series.subject))
    if not entries:
        raise DataError("no series matched features in the truth file")
    doc = {"entries": [e.to_json_dict() for e in entries]}
    with open(out / "recovery.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return _summary(
        {
            "command": "synth eval",
            "status": "ok",
            "features": [e.feature for e in entries],
            "max_abs_error": {e.feature: e.max_abs_error for e in entries},
            "artifacts": [str(out / "recovery.json")],
        }
    )


def build_parser() -> _Parser:
    p = _Parser(prog="tvrisk", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_io(sp, cohort=True, schema=True, out=True):
        if cohort:
            sp.add_argument("--cohort", required=True, help="cohort CSV")
        if schema:
            sp.add_argument("--schema", required=True, help="schema JSON")
        if out:
            sp.add_argument("--out", default=".", help="output directory")

    sp = sub.add_parser("validate", help="parse and check a cohort; writes nothing")
    add_io(sp, out=False)
    sp.set_defaults(fn=cmd_validate)

    sp = sub.add_parser("exclude", help="apply exclusion rules")
    add_io(sp)
    sp.add_argument("--exclusions", required=True, help="exclusion config JSON")
    sp.set_defaults(fn=cmd_exclude)

    sp = sub.add_parser("binarize", help="derive binary biomarkers from thresholds")
    add_io(sp)
    sp.add_argument("--rules", required=True, help="binarization rules JSON")
    sp.set_defaults(fn=cmd_binarize)

    sp = sub.add_parser("train", help="fit the bagged additive model")
    add_io(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--bags", type=int, default=None)
    sp.add_argument("--bins", type=int, default=None)
    sp.add_argument("--day-bins", dest="day_bins", type=int, default=None)
    sp.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    sp.add_argument("--rounds-main", dest="rounds_main", type=int, default=None)
    sp.add_argument("--rounds-interaction", dest="rounds_interaction", type=int, default=None)
    sp.add_argument("--max-leaves", dest="max_leaves", type=int, default=None)
    sp.add_argument("--bag-fraction", dest="bag_fraction", type=float, default=None)
    sp.add_argument("--patience", type=int, default=None)
    sp.add_argument("--interactions", default="auto",
                    help="'auto' (binary lab features), 'none', or comma list")
    sp.add_argument("--threads", type=int, default=1,
                    help="worker cap; does not affect results")
    sp.add_argument("--cv-folds", dest="cv_folds", type=int, default=0,
                    help="also report K-fold CV AUC")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("effects", help="odds-ratio series or shape curves with CIs")
    sp.add_argument("--model", required=True)
    sp.add_argument("--out", default=".")
    sp.add_argument("--biomarker", default=None)
    sp.add_argument("--group", default=None)
    sp.add_argument("--groups", default=None, help="groups JSON (for --group)")
    sp.add_argument("--shape", default=None, help="export a feature's shape band")
    sp.add_argument("--day", type=int, default=None, help="evaluate shape at this day")
    sp.add_argument("--suggest-threshold", action="store_true",
                    help="with --shape: emit a data-driven binarization threshold")
    sp.add_argument("--grid", default=None, help="day grid start:end:step")
    sp.set_defaults(fn=cmd_effects)

    sp = sub.add_parser("baseline", help="univariable and windowed logistic ORs")
    add_io(sp)
    sp.add_argument("--biomarkers", default="auto", help="'auto' or comma list")
    sp.add_argument("--windows", default=None, help="e.g. 0:100,100:300,300:")
    sp.add_argument("--groups", default=None)
    sp.add_argument("--rules", default=None)
    sp.add_argument("--strict", action="store_true",
                    help="exit 3 if any window fit fails to converge")
    sp.set_defaults(fn=cmd_baseline)

    sp = sub.add_parser("roc", help="discrimination metrics for a trained model")
    add_io(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--method", choices=["oob", "cv"], default="oob")
    sp.add_argument("--folds", type=int, default=5)
    sp.set_defaults(fn=cmd_roc)

    sp = sub.add_parser("synth", help="synthetic cohorts")
    ssub = sp.add_subparsers(dest="synth_command", required=True)

    sg = ssub.add_parser("gen", help="generate a cohort from a ground truth")
    sg.add_argument("--scenario", default="nyc-like")
    sg.add_argument("--truth", default=None, help="ground truth JSON (overrides --scenario)")
    sg.add_argument("--n", type=int, required=True)
    sg.add_argument("--seed", type=int, default=0)
    sg.add_argument("--out", default=".")
    sg.set_defaults(fn=cmd_synth_gen)

    se = ssub.add_parser("eval", help="score fitted effect series against a truth")
    se.add_argument("--series", required=True, help="effects CSV")
    se.add_argument("--truth", required=True, help="ground truth JSON")
    se.add_argument("--feature", default=None, help="comma list; default: all matching")
    se.add_argument("--out", default=".")
    se.set_defaults(fn=cmd_synth_eval)

    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, CohortError, FileNotFoundError, json.JSONDecodeError, KeyError,
            ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
