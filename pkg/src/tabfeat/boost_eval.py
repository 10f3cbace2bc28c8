"""Incremental-performance scoring by residual boosting.

Instead of retraining on base features plus a candidate, a small model is
trained on the candidate columns only, starting from frozen base
predictions (raw margins).  The score is the loss reduction it achieves on a
holdout: ``delta = base_loss - boosted_loss``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import gbdt
from .dataframe import Column, Dataset, FeatureKind, Task
from .exceptions import EvaluationError
from .gbdt import BoostParams, Objective
from .ops import Mode, as_expr, fit_transform

EPSILON = 1e-9
MIN_HOLDOUT = 10


def objective_for(dataset: Dataset) -> Objective:
    return {
        Task.REGRESSION: Objective.MSE,
        Task.BINARY: Objective.LOGLOSS,
        Task.MULTICLASS: Objective.SOFTMAX,
    }[dataset.task]


def params_for(dataset: Dataset, params: BoostParams) -> BoostParams:
    """``params`` with the objective matching the dataset's task."""
    return params.replace(objective=objective_for(dataset), n_classes=dataset.n_classes)


@dataclass
class BasePredictions:
    """Out-of-fold raw margins of the base model; NaN on rows not covered."""

    margins: np.ndarray
    objective: Objective
    n_classes: int = 1
    _loss_cache: dict = field(default_factory=dict, repr=False)

    def covered(self):
        m = self.margins if self.margins.ndim == 1 else self.margins[:, 0]
        return np.flatnonzero(~np.isnan(m))

    def base_loss(self, y, rows):
        rows = np.asarray(rows, dtype=np.int64)
        key = hashlib.sha1(rows.tobytes()).hexdigest()
        if key not in self._loss_cache:
            self._loss_cache[key] = gbdt.loss(self.objective, y[rows], self.margins[rows])
        return self._loss_cache[key]


@dataclass(frozen=True)
class DeltaScore:
    delta: float
    base_loss: float
    boosted_loss: float
    rows_used: int
    trees_used: int


def holdout_split(n, valid_fraction, seed):
    """Positions (fit, holdout) of a seeded random split of ``n`` items."""
    perm = np.random.default_rng(seed).permutation(n)
    n_hold = int(round(valid_fraction * n))
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def materialize(exprs, dataset, rows, fit_rows=None, mode=Mode.TRAIN_FIT):
    """Columns for ``exprs`` on ``rows``; statistics fitted on ``fit_rows``."""
    rows = np.asarray(rows, dtype=np.int64)
    fit_rows = rows if fit_rows is None else fit_rows
    out = []
    for e in exprs:
        if isinstance(e, Column):
            out.append(e)
        else:
            out.append(fit_transform(as_expr(e), dataset, fit_rows, rows, mode)[0])
    return out


def to_matrix(columns):
    """Stack columns into a float matrix plus a categorical mask."""
    if not columns:
        return np.zeros((0, 0)), np.zeros(0, bool)
    X = np.column_stack([c.as_float() for c in columns])
    cat = np.array([c.kind is FeatureKind.CATEGORICAL for c in columns])
    return X, cat


def _residual_fit(dataset, columns, base, rows, params, valid_fraction, in_sample):
    rows = np.asarray(rows, dtype=np.int64)
    fit_pos, hold_pos = holdout_split(rows.size, valid_fraction, params.seed)
    if hold_pos.size < MIN_HOLDOUT:
        raise EvaluationError(f"holdout of {hold_pos.size} rows is too small "
                              f"(need {MIN_HOLDOUT}); use a larger subset")
    y_all = dataset.y()
    y = y_all[rows]
    margin = base.margins[rows]
    if np.isnan(margin).any():
        raise EvaluationError("base predictions do not cover every evaluated row")
    params = params_for(dataset, params)
    if columns:
        X, cat = to_matrix(columns)
    else:
        X, cat = np.zeros((rows.size, 1)), np.zeros(1, bool)
        X[:] = np.nan
    names = [c.name for c in columns] if columns else ["<none>"]
    model = gbdt.train(X, y, margin, fit_pos, hold_pos, params, cat, names)
    if in_sample:
        scored = np.arange(rows.size)
        base_loss = base.base_loss(y_all, rows)
        boosted_loss = gbdt.loss(params.objective, y, gbdt.predict(model, X, margin=margin))
    else:
        scored = hold_pos
        base_loss = base.base_loss(y_all, rows[hold_pos])
        boosted_loss = model.valid_curve[model.best_iteration]
    score = DeltaScore(base_loss - boosted_loss, base_loss, boosted_loss,
                       int(scored.size), model.best_iteration)
    return score, model


def feature_boost(dataset: Dataset, exprs, base: BasePredictions, rows,
                  params: BoostParams = gbdt.STAGE1_PARAMS, valid_fraction=0.2, *,
                  fit_rows=None, mode=Mode.TRAIN_FIT, in_sample=False) -> DeltaScore:
    """Score the feature set ``exprs`` on ``rows`` against the base margins.

    ``exprs`` may hold expressions or columns already materialized on
    ``rows``.  The rows are split into a fit part and a holdout part
    (``valid_fraction``, seeded by ``params.seed``); the residual model early
    stops on the holdout and the delta is measured there.  With
    ``in_sample=True`` the delta is measured on all of ``rows`` instead.
    """
    if not len(exprs):
        raise ValueError("feature_boost needs at least one feature")
    columns = materialize(exprs, dataset, rows, fit_rows, mode)
    return _residual_fit(dataset, columns, base, rows, params, valid_fraction, in_sample)[0]


def evaluate_full(dataset: Dataset, base_exprs, candidate_exprs, base: BasePredictions,
                  params: BoostParams = gbdt.STAGE2_PARAMS, rows=None, valid_fraction=0.2,
                  *, fit_rows=None, mode=Mode.TRAIN_FIT, in_sample=False):
    """Residual fit over base and candidate columns jointly.

    Returns the delta together with the trained model, whose split gains give
    each column's importance.
    """
    rows = base.covered() if rows is None else np.asarray(rows, dtype=np.int64)
    columns = materialize(list(base_exprs) + list(candidate_exprs), dataset, rows,
                          fit_rows, mode)
    return _residual_fit(dataset, columns, base, rows, params, valid_fraction, in_sample)
