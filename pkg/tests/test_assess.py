import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from verimodel.modeling import (
    Dataset,
    EmptyDataset,
    ExprModel,
    GPConfig,
    LinearModel,
    TooFewRows,
    TrainTestOverlap,
    assess,
    dumps_model,
    fit_linear,
    load_model,
    model_from_json,
    model_to_json,
    read_csv,
    save_model,
    split,
    symbolic_regression,
)


def rows(n):
    X = np.arange(n, dtype=float).reshape(-1, 1)
    return Dataset(("x",), X, 2 * X[:, 0] + 1, row_ids=tuple(range(100, 100 + n)))


def test_split_sizes_and_partition():
    train, test = split(rows(10), 0.3, seed=1)
    assert (len(train), len(test)) == (7, 3)
    assert set(train.row_ids).isdisjoint(test.row_ids)
    assert set(train.row_ids) | set(test.row_ids) == set(range(100, 110))


def test_split_is_seeded():
    a, b = split(rows(10), 0.3, 4), split(rows(10), 0.3, 4)
    assert a[1].row_ids == b[1].row_ids
    tests = {split(rows(10), 0.3, s)[1].row_ids for s in range(5)}
    assert len(tests) > 1


def test_split_too_few_rows():
    with pytest.raises(TooFewRows):
        split(rows(1), 0.5, 0)
    with pytest.raises(TooFewRows):
        split(rows(3), 0.1, 0)


@given(st.integers(2, 60), st.floats(0.05, 0.95), st.integers(0, 10 ** 6))
def test_split_partition_property(n, f, seed):
    try:
        train, test = split(rows(n), f, seed)
    except TooFewRows:
        return
    assert len(train) and len(test)
    assert sorted(train.row_ids + test.row_ids) == list(range(100, 100 + n))


def test_perfect_predictions():
    train, test = split(rows(12), 0.25, 0)
    r = assess(fit_linear(train), test)
    assert r.mape == pytest.approx(0, abs=1e-12) and r.rmse == pytest.approx(0, abs=1e-12)
    assert r.r_squared == pytest.approx(1)


def test_hand_computed_errors():
    # predictions 9 and 11 against y = 10, 10
    model = LinearModel(7.0, (2.0,), ("x",), 10, 1.0, 0.0, np.eye(2), train_rows=(0,))
    test = Dataset(("x",), [[1.0], [2.0]], [10.0, 10.0], row_ids=(5, 6))
    r = assess(model, test)
    assert r.rmse == pytest.approx(1.0) and r.mape == pytest.approx(0.1)
    assert r.residuals == (1.0, -1.0)


def test_mean_model_r_squared_not_clamped():
    model = LinearModel(0.0, (0.0,), ("x",), 10, 1.0, 0.0, np.eye(2), train_rows=(0,))
    test = Dataset(("x",), [[1.0], [2.0], [3.0]], [1.0, 2.0, 3.0], row_ids=(1, 2, 3))
    assert assess(model, test).r_squared < 0


def test_mape_guard_near_zero():
    model = LinearModel(0.5, (0.0,), ("x",), 10, 1.0, 0.0, np.eye(2), train_rows=(0,))
    test = Dataset(("x",), [[1.0]], [0.0], row_ids=(1,))
    assert assess(model, test).mape == pytest.approx(0.5)


def test_overlap_rejected():
    data = rows(10)
    model = fit_linear(data)
    with pytest.raises(TrainTestOverlap):
        assess(model, data.take([0, 1]))


def test_empty_test_set():
    with pytest.raises(EmptyDataset):
        assess(fit_linear(rows(5)), Dataset(("x",), np.zeros((0, 1)), [], row_ids=()))


def test_coverage_reported_for_linear_only():
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 5, size=(40, 1))
    data = Dataset(("x",), X, 3 * X[:, 0] + rng.normal(0, 1, 40))
    train, test = split(data, 0.25, 0)
    r = assess(fit_linear(train), test)
    assert 0 <= r.coverage <= 1 and r.alpha == 0.05
    gp = ExprModel(["mul", 3.0, 0], ("x",), 0.0, train_rows=train.row_ids)
    assert assess(gp, test).coverage is None
    doc = r.to_json()
    assert {"mape", "rmse", "r_squared_test", "interval_coverage", "train_rows", "test_rows"} <= set(doc)


def test_read_csv_skips_bad_status(tmp_path):
    p = tmp_path / "obs.csv"
    p.write_text("run_index,a,b,status,cost\n0,1,2,ok,10\n1,2,3,truncated,99\n2,3,1,ok,12\n")
    d = read_csv(p, "cost")
    assert d.feature_names == ("a", "b") and d.row_ids == (0, 2)
    assert d.y.tolist() == [10, 12]


# model files


def test_linear_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    X = rng.normal(size=(15, 2))
    m = fit_linear(Dataset(("a", "b"), X, X @ [1.5, -2] + rng.normal(size=15)), seed=9)
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert dumps_model(back) == dumps_model(m)
    assert back.predict(X).tolist() == m.predict(X).tolist()
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["format_version"] == 1 and doc["kind"] == "linear" and doc["training"]["seed"] == 9


def test_expression_round_trip():
    data = Dataset(("p", "q"), [[1, 2], [2, 1], [3, 3], [0, 1]], [3, 3, 6, 1])
    m = symbolic_regression(data, GPConfig(seed=2, population=50, generations=5))
    back = model_from_json(json.loads(dumps_model(m)))
    assert back.program == m.program and back.mse == m.mse
    assert dumps_model(back) == dumps_model(m)


def test_unknown_version_rejected():
    doc = model_to_json(LinearModel(1.0, (2.0,), ("x",), 5, 0.0, 1.0))
    doc["format_version"] = 2
    with pytest.raises(ValueError):
        model_from_json(doc)


finite = st.floats(-1e12, 1e12, allow_nan=False)


@settings(max_examples=100)
@given(st.lists(finite, min_size=1, max_size=5), finite, st.floats(0, 1e6), st.integers(0, 2 ** 31))
def test_linear_json_lossless(coefs, intercept, std, seed):
    names = tuple(f"f{i}" for i in range(len(coefs)))
    m = LinearModel(intercept, tuple(coefs), names, 20, std, 0.5, np.eye(len(coefs) + 1) * std, seed=seed)
    back = model_from_json(json.loads(dumps_model(m)))
    assert (back.intercept, back.coefficients, back.residual_std, back.seed) == \
        (m.intercept, m.coefficients, m.residual_std, m.seed)
    assert np.array_equal(back.xtx_inv, m.xtx_inv)
