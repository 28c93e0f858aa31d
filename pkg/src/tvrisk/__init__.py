"""Time-varying mortality risk models for tabular cohort data.

Pipeline pieces: cohort loading and preprocessing (`cohort`), quantile binning
(`binning`), the boosted additive model with day interactions (`gam`), bagged
confidence bands (`bagging`), odds-ratio series and thresholds (`effects`),
logistic-regression baselines (`baselines`), discrimination metrics (`metrics`),
and synthetic ground-truth cohorts (`synth`). The `tvrisk` CLI chains them.
"""

from .bagging import BagEnsemble, ShapeBand, as_ensemble, fit_bagged, load_model, save_model, shape_with_ci
from .binning import BinMap, build_bins
from .cohort import (
    BinarizationRule,
    CohortError,
    CohortTable,
    ExclusionConfig,
    ExclusionReport,
    Feature,
    FeatureSchema,
    PatientRecord,
    apply_binarization,
    apply_exclusions,
    load_cohort,
)
from .effects import (
    BiomarkerGroup,
    EffectPoint,
    EffectSeries,
    ShapeCurve,
    biomarker_or_series,
    group_or_series,
    select_threshold,
)
from .gam import (
    GamConfig,
    GamModel,
    ShapeInteraction,
    ShapeMain,
    center_model,
    fit_main_effects,
    fit_time_interactions,
    predict_logit,
)
from .baselines import LogisticFit, TwoByTwo, fit_logistic, univariable_or, windowed_or_table
from .metrics import RocResult, auc_with_se_cv, auc_with_se_oob, roc_auc
from .synth import GroundTruth, RecoveryEntry, generate_cohort, nyc_like_truth, recovery_error

__version__ = "0.1.0"

__all__ = [
    "BagEnsemble",
    "BinMap",
    "BinarizationRule",
    "BiomarkerGroup",
    "CohortError",
    "CohortTable",
    "EffectPoint",
    "EffectSeries",
    "ExclusionConfig",
    "ExclusionReport",
    "Feature",
    "FeatureSchema",
    "GamConfig",
    "GamModel",
    "GroundTruth",
    "LogisticFit",
    "PatientRecord",
    "RecoveryEntry",
    "RocResult",
    "ShapeBand",
    "ShapeCurve",
    "ShapeInteraction",
    "ShapeMain",
    "TwoByTwo",
    "apply_binarization",
    "apply_exclusions",
    "as_ensemble",
    "auc_with_se_cv",
    "auc_with_se_oob",
    "biomarker_or_series",
    "build_bins",
    "center_model",
    "fit_bagged",
    "fit_logistic",
    "fit_main_effects",
    "fit_time_interactions",
    "generate_cohort",
    "group_or_series",
    "load_cohort",
    "load_model",
    "nyc_like_truth",
    "predict_logit",
    "recovery_error",
    "roc_auc",
    "save_model",
    "select_threshold",
    "shape_with_ci",
    "univariable_or",
    "windowed_or_table",
]
