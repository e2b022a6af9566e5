"""Held-out accuracy of a fitted model."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataset import Dataset, EmptyDataset
from .linear import LinearModel, prediction_interval

MAPE_EPSILON = 1.0


class TrainTestOverlap(ValueError):
    pass


@dataclass(frozen=True)
class AssessmentReport:
    train_rows: tuple
    test_rows: tuple
    seed: Optional[int]
    mape: float
    rmse: float
    r_squared: float
    alpha: Optional[float]
    coverage: Optional[float]  # None for models without prediction intervals
    residuals: tuple
    predictions: tuple

    def to_json(self) -> dict:
        return {
            "train_rows": list(self.train_rows),
            "test_rows": list(self.test_rows),
            "seed": self.seed,
            "mape": self.mape,
            "rmse": self.rmse,
            "r_squared_test": self.r_squared,
            "interval_alpha": self.alpha,
            "interval_coverage": self.coverage,
            "residuals": list(self.residuals),
            "predictions": list(self.predictions),
        }


def assess(model, test: Dataset, alpha: float = 0.05, seed: Optional[int] = None) -> AssessmentReport:
    """Score ``model`` on rows it was not trained on.

    MAPE divides by max(|y|, 1) so responses near zero stay meaningful.
    Test R^2 is reported as computed and may be negative.
    """
    if len(test) == 0:
        raise EmptyDataset("empty test set")
    overlap = set(test.row_ids) & set(model.train_rows)
    if overlap:
        raise TrainTestOverlap(f"rows used for training appear in the test set: {sorted(overlap)}")
    if tuple(test.feature_names) != tuple(model.feature_names):
        test = test.select(model.feature_names)
    y = test.y
    pred = np.atleast_1d(model.predict(test.X))
    resid = y - pred
    mape = float(np.mean(np.abs(resid) / np.maximum(np.abs(y), MAPE_EPSILON)))
    rmse = float(np.sqrt(np.mean(resid ** 2)))
    sst = float(((y - y.mean()) ** 2).sum())
    ssr = float((resid ** 2).sum())
    if sst > 0:
        r2 = 1.0 - ssr / sst
    else:
        r2 = 1.0 if ssr == 0 else -np.inf
    coverage = None
    if isinstance(model, LinearModel) and model.dof >= 1:
        lo, hi = prediction_interval(model, test.X, alpha)
        coverage = float(np.mean((y >= lo) & (y <= hi)))
    return AssessmentReport(
        train_rows=tuple(model.train_rows),
        test_rows=tuple(test.row_ids),
        seed=seed if seed is not None else model.seed,
        mape=mape,
        rmse=rmse,
        r_squared=float(r2),
        alpha=alpha if coverage is not None else None,
        coverage=coverage,
        residuals=tuple(float(r) for r in resid),
        predictions=tuple(float(p) for p in pred),
    )
