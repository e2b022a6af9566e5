"""Ordinary least squares via column-pivoted QR, with prediction intervals."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .dataset import Dataset, TooFewRows
from .tdist import t_ppf

INTERCEPT = "(intercept)"
_RANK_TOL = 1e-9


class RankDeficient(ValueError):
    def __init__(self, columns, basis):
        self.columns = tuple(columns)
        self.basis = tuple(basis)
        super().__init__(
            f"design matrix is rank deficient: {', '.join(self.columns)} "
            f"linearly dependent on {', '.join(self.basis) or 'nothing'}")


class ArityMismatch(ValueError):
    pass


class DegreesOfFreedomTooSmall(ValueError):
    pass


@dataclass(eq=False)
class LinearModel:
    """y ~ intercept + sum(coefficients * x), optionally on log(y).

    ``xtx_inv`` is the inverse Gram matrix of the training design (with the
    intercept column first); prediction intervals need it.
    """

    intercept: float
    coefficients: tuple
    feature_names: tuple
    n: int
    residual_std: float
    r_squared: float
    xtx_inv: Optional[np.ndarray] = None
    log_response: bool = False
    response: str = "y"
    seed: Optional[int] = None
    train_rows: tuple = ()
    kind: str = field(default="linear", init=False)

    @property
    def dof(self) -> int:
        return self.n - len(self.coefficients) - 1

    def _raw(self, X: np.ndarray) -> np.ndarray:
        return self.intercept + X @ np.asarray(self.coefficients, dtype=float)

    def predict(self, x):
        X, single = as_points(x, len(self.feature_names))
        out = self._raw(X)
        if self.log_response:
            out = np.exp(out)
        return float(out[0]) if single else out

    def formula(self, response: str = "cost") -> str:
        lhs = f"log({response})" if self.log_response else response
        parts = [f"{lhs} ≈ {_num(self.intercept)}"]
        for name, c in zip(self.feature_names, self.coefficients):
            parts.append(f"{'-' if c < 0 else '+'} {_num(abs(c))}·{name}")
        return " ".join(parts)


def _num(v: float) -> str:
    return f"{v:.6g}"


def as_points(x, p: int):
    """Coerce a point or a batch of points into an (m, p) array."""
    X = np.asarray(x, dtype=float)
    single = X.ndim <= 1
    X = np.atleast_2d(X)
    if X.shape[1] != p:
        raise ArityMismatch(f"model has {p} features, got {X.shape[1]} values")
    return X, single


def _design(X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(len(X)), X])


def check_rank(A: np.ndarray, names) -> None:
    """Raise RankDeficient if some column is a linear combination of the
    columns before it. Columns are scanned left to right, so the error names
    the later column of a collinear group together with the earlier columns
    it depends on."""
    basis, dependent, used = [], [], set()
    scale = max(A.shape)
    for j in range(A.shape[1]):
        col = A[:, j]
        norm = float(np.linalg.norm(col))
        if basis:
            coef, *_ = np.linalg.lstsq(A[:, basis], col, rcond=None)
            resid = float(np.linalg.norm(col - A[:, basis] @ coef))
        else:
            coef, resid = np.zeros(0), norm
        if resid <= _RANK_TOL * scale * max(norm, 1.0):
            dependent.append(j)
            used |= {basis[i] for i in range(len(basis)) if abs(coef[i]) > 1e-8}
        else:
            basis.append(j)
    if dependent:
        raise RankDeficient([names[j] for j in dependent], [names[j] for j in sorted(used)])


def fit_linear(data: Dataset, log_response: bool = False, seed: Optional[int] = None) -> LinearModel:
    """Least-squares fit using a column-pivoted QR decomposition.

    Collinearity is checked before the row count so the error names the
    offending columns even on tiny designs.
    """
    if len(data) == 0:
        raise TooFewRows("no rows")
    y = data.y
    if log_response:
        if np.any(y <= 0):
            raise ValueError("log response needs strictly positive responses")
        y = np.log(y)
    A = _design(data.X)
    names = (INTERCEPT,) + data.feature_names
    n, k = A.shape
    check_rank(A, names)
    Q, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    if n <= k:
        raise TooFewRows(f"{n} rows for {k - 1} features; need more than {k}")
    beta_p = scipy.linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty(k)
    beta[piv] = beta_p
    resid = y - A @ beta
    ssr = float(resid @ resid)
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ssr / sst if sst > 0 else (1.0 if ssr <= 1e-24 else 0.0)
    rinv = scipy.linalg.solve_triangular(R, np.eye(k))
    xtx_inv = np.empty((k, k))
    xtx_inv[np.ix_(piv, piv)] = rinv @ rinv.T
    return LinearModel(
        intercept=float(beta[0]),
        coefficients=tuple(float(b) for b in beta[1:]),
        feature_names=data.feature_names,
        n=n,
        residual_std=float(np.sqrt(ssr / (n - k))),
        r_squared=float(r2),
        xtx_inv=xtx_inv,
        log_response=log_response,
        response=data.response,
        seed=seed,
        train_rows=data.row_ids,
    )


def prediction_interval(model: LinearModel, x, alpha: float = 0.05):
    """Interval expected to contain a new observation at ``x`` with
    probability 1 - alpha. Returns (lo, hi), or arrays for a batch."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    if model.dof < 1:
        raise DegreesOfFreedomTooSmall(f"{model.dof} residual degrees of freedom")
    if model.xtx_inv is None:
        raise ValueError("model carries no training design information")
    X, single = as_points(x, len(model.feature_names))
    A = _design(X)
    center = model._raw(X)
    lever = np.einsum("ij,jk,ik->i", A, model.xtx_inv, A)
    half = t_ppf(1.0 - alpha / 2.0, model.dof) * model.residual_std * np.sqrt(1.0 + lever)
    lo, hi = center - half, center + half
    if model.log_response:
        lo, hi = np.exp(lo), np.exp(hi)
    if single:
        return float(lo[0]), float(hi[0])
    return lo, hi
