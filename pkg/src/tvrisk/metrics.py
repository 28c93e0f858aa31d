"""Discrimination metrics: rank-statistic ROC AUC with bag- or fold-based SEs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .bagging import BagEnsemble
from .cohort import CohortTable
from .gam import GamConfig, fit_model


def roc_auc(scores, labels) -> float:
    """Probability a random positive outscores a random negative; ties count 0.5.

    Computed from the rank sum of positives (Mann-Whitney), O(n log n).
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need at least one positive and one negative label")
    ranks = rankdata(s, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_points(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """(fpr, tpr) staircase, one point per distinct score threshold."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    distinct = np.flatnonzero(np.diff(s)) if len(s) > 1 else np.array([], dtype=np.intp)
    cuts = np.concatenate([distinct, [len(s) - 1]])
    tp = np.cumsum(y)[cuts]
    fp = np.cumsum(1.0 - y)[cuts]
    n_pos = y.sum()
    n_neg = len(y) - n_pos
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    return fpr, tpr


@dataclass(frozen=True)
class RocResult:
    auc: float
    se: float
    n_pos: int
    n_neg: int
    method: str  # bag_variation | fold_cv
    n_evaluations: int = 0
    n_skipped: int = 0

    def to_json_dict(self) -> dict:
        return {
            "auc": self.auc,
            "se": self.se,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "method": self.method,
            "n_evaluations": self.n_evaluations,
            "n_skipped": self.n_skipped,
        }


def _summarize(aucs: list[float], y: np.ndarray, method: str, skipped: int) -> RocResult:
    if not aucs:
        raise ValueError("no evaluations produced a usable AUC")
    arr = np.asarray(aucs)
    se = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return RocResult(
        auc=float(arr.mean()),
        se=se,
        n_pos=int((y == 1).sum()),
        n_neg=int((y == 0).sum()),
        method=method,
        n_evaluations=len(arr),
        n_skipped=skipped,
    )


def auc_with_se_oob(ensemble: BagEnsemble, table: CohortTable) -> RocResult:
    """Mean and SE of per-bag out-of-bag AUCs; single-class bags are skipped
    and counted."""
    if ensemble.bag_count < 2:
        raise ValueError("need >= 2 bags for an out-of-bag SE")
    if ensemble.n_source_rows != table.n_rows:
        raise ValueError("table does not match the ensemble's training table")
    y = table.outcomes
    aucs: list[float] = []
    skipped = 0
    for k, model in enumerate(ensemble.members):
        oob = ensemble.out_of_bag_indices(k)
        if len(oob) == 0:
            skipped += 1
            continue
        y_oob = y[oob]
        if (y_oob == 1).sum() == 0 or (y_oob == 0).sum() == 0:
            skipped += 1
            continue
        scores = model.predict_logit_table(table.take(oob))
        aucs.append(roc_auc(scores, y_oob))
    return _summarize(aucs, y, "bag_variation", skipped)


def auc_with_se_cv(
    table: CohortTable,
    cfg: GamConfig,
    interaction_features: Sequence[str] = (),
    n_folds: int = 5,
) -> RocResult:
    """K-fold cross-validated AUC of single (unbagged) fits; folds drawn from
    the config seed."""
    if n_folds < 2:
        raise ValueError("need >= 2 folds")
    n = table.n_rows
    rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, 0xCF]))
    perm = rng.permutation(n)
    folds = np.array_split(perm, n_folds)
    y = table.outcomes
    aucs: list[float] = []
    skipped = 0
    for fold in folds:
        train_idx = np.setdiff1d(perm, fold)
        y_fold = y[fold]
        if (y_fold == 1).sum() == 0 or (y_fold == 0).sum() == 0:
            skipped += 1
            continue
        train = table.take(np.sort(train_idx))
        model = fit_model(train, cfg, interaction_features, rng=rng)
        scores = model.predict_logit_table(table.take(fold))
        aucs.append(roc_auc(scores, y_fold))
    return _summarize(aucs, y, "fold_cv", skipped)
