import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from verimodel.modeling import (
    ArityMismatch,
    Dataset,
    DegreesOfFreedomTooSmall,
    LinearModel,
    RankDeficient,
    TooFewRows,
    fit_linear,
    predict,
    prediction_interval,
)


def data(X, y, names=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = names or tuple(f"x{i}" for i in range(X.shape[1]))
    return Dataset(names, X, y)


def noisy_plane(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 10, size=(n, 2))
    return X, 3 * X[:, 0] + 5 * X[:, 1] + rng.normal(0, 0.1, n)


def test_exact_line():
    m = fit_linear(data(range(5), [1, 3, 5, 7, 9]))
    assert m.intercept == pytest.approx(1) and m.coefficients[0] == pytest.approx(2)
    assert m.residual_std == pytest.approx(0, abs=1e-12) and m.r_squared == pytest.approx(1)


def test_constant_response():
    m = fit_linear(data([[0, 1], [1, 0], [2, 2], [3, 1], [1, 3]], [7] * 5))
    assert m.intercept == pytest.approx(7)
    assert np.allclose(m.coefficients, 0, atol=1e-12)


def test_noisy_plane_against_normal_equations():
    X, y = noisy_plane(50, 1)
    m = fit_linear(data(X, y))
    A = np.column_stack([np.ones(50), X])
    oracle = np.linalg.solve(A.T @ A, A.T @ y)
    assert np.allclose([m.intercept, *m.coefficients], oracle, atol=1e-9)
    assert abs(m.coefficients[0] - 3) < 0.15 and abs(m.coefficients[1] - 5) < 0.15


def test_rank_deficient_names_columns():
    X = np.array([[1, 2], [2, 4], [3, 6], [4, 8], [5, 9.0]])
    X[:, 1] = 2 * X[:, 0]
    with pytest.raises(RankDeficient, match="b") as exc:
        fit_linear(data(X, [1, 2, 3, 4, 5], ("a", "b")))
    assert list(exc.value.columns) == ["b"]


def test_too_few_rows():
    with pytest.raises(TooFewRows):
        fit_linear(data([[0, 1], [1, 0], [1, 1]], [1, 2, 3]))


def test_predict_examples():
    m = LinearModel(1.0, (2.0,), ("x",), 10, 0.0, 1.0)
    assert predict(m, [3]) == 7
    assert predict(LinearModel(0.0, (0.0, 0.0), ("a", "b"), 10, 0.0, 1.0), [5, -2]) == 0
    with pytest.raises(ArityMismatch):
        predict(m, [1, 2])


def test_formula_text():
    m = fit_linear(data(range(5), [1, 3, 5, 7, 9]))
    assert m.formula("cost") == "cost ≈ 1 + 2·x0"


def test_log_response_fit():
    x = np.arange(1, 8, dtype=float)
    m = fit_linear(data(x, 3 * np.exp(0.5 * x)), log_response=True)
    assert m.coefficients[0] == pytest.approx(0.5) and predict(m, [2]) == pytest.approx(3 * np.e)


def test_interval_degenerate_with_zero_residual():
    m = fit_linear(data(range(5), [1, 3, 5, 7, 9]))
    lo, hi = prediction_interval(m, [10], 0.05)
    assert lo == pytest.approx(21) and hi == pytest.approx(21)


def test_interval_shrinks_as_alpha_grows():
    X, y = noisy_plane(30, 2)
    m = fit_linear(data(X, y))
    widths = [np.subtract(*prediction_interval(m, [5, 5], a)[::-1]) for a in (0.01, 0.1, 0.5, 0.9, 0.999)]
    assert widths == sorted(widths, reverse=True) and widths[-1] < 0.01


def test_interval_matches_textbook_formula():
    X, y = noisy_plane(20, 3)
    m = fit_linear(data(X, y))
    A = np.column_stack([np.ones(20), X])
    a = np.array([1.0, 4.0, 6.0])
    half = stats.t.ppf(0.975, 17) * m.residual_std * np.sqrt(1 + a @ np.linalg.inv(A.T @ A) @ a)
    lo, hi = prediction_interval(m, [4.0, 6.0], 0.05)
    assert (hi - lo) / 2 == pytest.approx(half, rel=1e-4)


def test_interval_needs_degrees_of_freedom():
    m = LinearModel(0.0, (1.0,), ("x",), 2, 0.0, 1.0, np.eye(2))
    with pytest.raises(DegreesOfFreedomTooSmall):
        prediction_interval(m, [1], 0.05)


def interval_coverage(seed, trials=1000, n_train=20):
    """Fraction of fresh points inside their 95% interval, each point scored
    against its own freshly drawn training set (the unconditional coverage
    the interval is built to have)."""
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(trials):
        X = rng.uniform(0, 10, size=(n_train + 1, 2))
        y = 1 + 2 * X[:, 0] - X[:, 1] + rng.normal(0, 1, n_train + 1)
        m = fit_linear(data(X[:-1], y[:-1]))
        lo, hi = prediction_interval(m, X[-1], 0.05)
        hits += lo <= y[-1] <= hi
    return hits / trials


def test_interval_coverage_monte_carlo():
    assert 0.93 <= interval_coverage(2024) <= 0.97


@st.composite
def regression_problems(draw):
    p = draw(st.integers(1, 4))
    n = draw(st.integers(p + 2, 30))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    X = rng.uniform(-100, 100, size=(n, p))
    y = X @ rng.normal(0, 5, p) + rng.normal(0, draw(st.sampled_from([0.0, 0.1, 10.0])), n)
    return X, y


@settings(max_examples=100, deadline=None)
@given(regression_problems())
def test_residuals_orthogonal_and_projection_idempotent(problem):
    X, y = problem
    m = fit_linear(data(X, y))
    A = np.column_stack([np.ones(len(y)), X])
    yhat = predict(m, X)
    normal = A.T @ (y - yhat)
    assert np.all(np.abs(normal) <= 1e-8 * (np.abs(A).T @ np.abs(y) + 1))
    again = fit_linear(data(X, yhat))
    assert np.allclose([again.intercept, *again.coefficients], [m.intercept, *m.coefficients], atol=1e-9, rtol=1e-9)
    assert m.residual_std >= 0 and m.r_squared <= 1 + 1e-12
