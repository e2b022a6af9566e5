"""Macro-model fitting and held-out assessment."""

from .assess import AssessmentReport, TrainTestOverlap, assess
from .dataset import Dataset, EmptyDataset, TooFewRows, read_csv, split
from .gp import ExprModel, GPConfig, symbolic_regression
from .io import dumps_model, load_model, model_from_json, model_to_json, save_model
from .linear import (
    ArityMismatch,
    DegreesOfFreedomTooSmall,
    LinearModel,
    RankDeficient,
    fit_linear,
    prediction_interval,
)


def predict(model, x):
    """Estimate the response at feature point ``x`` (or a batch of points).

    The estimate is only as good as the training data is representative:
    inputs drawn from a different distribution than the experiments the
    model was fitted on can be arbitrarily off, and nothing here detects it.
    """
    return model.predict(x)


__all__ = [
    "ArityMismatch", "AssessmentReport", "Dataset", "DegreesOfFreedomTooSmall",
    "EmptyDataset", "ExprModel", "GPConfig", "LinearModel", "RankDeficient",
    "TooFewRows", "TrainTestOverlap", "assess", "dumps_model", "fit_linear",
    "load_model", "model_from_json", "model_to_json", "predict",
    "prediction_interval", "read_csv", "save_model", "split", "symbolic_regression",
]
