import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from verimodel.modeling.tdist import norm_ppf, t_ppf


@pytest.mark.parametrize("p", [1e-6, 0.001, 0.02, 0.1, 0.3, 0.5, 0.7, 0.9, 0.975, 0.999, 1 - 1e-6])
def test_normal_quantile(p):
    assert abs(norm_ppf(p) - stats.norm.ppf(p)) < 1e-8 * max(1.0, abs(stats.norm.ppf(p)))


@pytest.mark.parametrize("df", [1, 2, 3, 4, 5, 10, 30, 100, 1000])
@pytest.mark.parametrize("p", [0.55, 0.9, 0.95, 0.975, 0.995])
def test_t_quantile_table(df, p):
    tol = 1e-4 if df >= 3 else 1e-9
    assert abs(t_ppf(p, df) - stats.t.ppf(p, df)) < tol


@given(st.integers(3, 500), st.floats(0.51, 0.999))
def test_t_quantile_error_bound(df, p):
    assert abs(t_ppf(p, df) - stats.t.ppf(p, df)) < 1e-4


@given(st.integers(1, 200), st.floats(0.01, 0.99))
def test_symmetry(df, p):
    # 1 - (1 - p) != p in floating point, which can straddle the branch point
    # of the normal approximation; its seam there is below 1e-7
    assert t_ppf(p, df) == pytest.approx(-t_ppf(1 - p, df), abs=1e-6)


def test_median_is_zero_and_monotone():
    assert t_ppf(0.5, 7) == 0.0
    qs = [t_ppf(p, 7) for p in np.linspace(0.01, 0.99, 50)]
    assert qs == sorted(qs)


def test_bad_arguments():
    with pytest.raises(ValueError):
        t_ppf(1.0, 5)
    with pytest.raises(ValueError):
        t_ppf(0.5, 0)
