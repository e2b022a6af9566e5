"""Tabular datasets for model fitting, and the hold-out split."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class TooFewRows(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Feature matrix ``X`` (rows x features), response vector ``y``.

    ``row_ids`` identify rows across splits (observation run indices when
    the data comes from an experiment), so train/test overlap is detectable
    after the arrays have been shuffled.
    """

    feature_names: tuple
    X: np.ndarray
    y: np.ndarray
    response: str = "y"
    row_ids: tuple = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, len(self.feature_names))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} feature rows but {y.shape[0]} responses")
        if X.shape[1] != len(self.feature_names):
            raise ValueError(f"{X.shape[1]} columns but {len(self.feature_names)} feature names")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        ids = tuple(self.row_ids) if len(self.row_ids) else tuple(range(len(y)))
        if len(ids) != len(y):
            raise ValueError("row_ids length differs from row count")
        if len(set(ids)) != len(ids):
            raise ValueError("row_ids must be unique")
        object.__setattr__(self, "row_ids", ids)

    def __len__(self) -> int:
        return len(self.y)

    def take(self, idx: Sequence[int]) -> "Dataset":
        idx = list(idx)
        return Dataset(self.feature_names, self.X[idx], self.y[idx], self.response,
                       tuple(self.row_ids[i] for i in idx))

    def select(self, names: Sequence[str]) -> "Dataset":
        """Restrict to the named feature columns, in the given order."""
        cols = []
        for n in names:
            if n not in self.feature_names:
                raise KeyError(f"no feature column {n!r}")
            cols.append(self.feature_names.index(n))
        return Dataset(tuple(names), self.X[:, cols], self.y, self.response, self.row_ids)


def read_csv(path, response: str, features: Optional[Sequence[str]] = None,
             id_column: str = "run_index", status_column: str = "status") -> Dataset:
    """Load a dataset from a CSV file.

    Without ``features`` every numeric column other than the id, status and
    response columns is used. Rows whose status is present and not ``ok``
    are skipped, since they carry no valid response.
    """
    with open(Path(path), newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise EmptyDataset(f"{path}: no data rows")
    header = list(rows[0])
    if response not in header:
        raise KeyError(f"{path}: no response column {response!r}")
    rows = [r for r in rows if r.get(status_column, "ok") in ("ok", "")]
    if not rows:
        raise EmptyDataset(f"{path}: no rows with status ok")
    if features is None:
        skip = {id_column, status_column, response}
        features = [h for h in header if h not in skip and _numeric(rows, h)]
    X = [[float(r[c]) for c in features] for r in rows]
    y = [float(r[response]) for r in rows]
    ids = tuple(int(r[id_column]) for r in rows) if id_column in header else ()
    return Dataset(tuple(features), np.array(X, dtype=float).reshape(len(rows), len(features)),
                   np.array(y), response, ids)


def _numeric(rows, col) -> bool:
    try:
        for r in rows:
            float(r[col])
    except (TypeError, ValueError):
        return False
    return True


def split(data: Dataset, test_fraction: float, seed: int):
    """Seeded shuffle, then the first part trains and the rest tests."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    n = len(data)
    n_test = int(math.floor(n * test_fraction + 0.5))
    if n_test < 1 or n - n_test < 1:
        raise TooFewRows(f"cannot split {n} rows with test fraction {test_fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    return data.take(perm[: n - n_test]), data.take(perm[n - n_test:])
