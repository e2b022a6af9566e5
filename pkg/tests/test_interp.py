import pytest

from verimodel.frontend import parse_program
from verimodel.interp import FuelExhausted, Trap, arith, c_div, c_mod, interpret, wrap
from verimodel.ir import INT_MAX, INT_MIN


def run(src, **inputs):
    return interpret(parse_program(src), inputs)


def test_identity():
    assert run("fn f(x) { return x; }", x=7) == 7


def test_divide_by_zero_trap():
    r = run("fn f(x) { return 1 / x; }", x=0)
    assert isinstance(r, Trap) and r.kind == "divide-by-zero"
    assert r.loc is not None and r.function == "f"


def test_out_of_bounds_trap():
    r = run("fn f(a[3]) { return a[3]; }", a=[1, 2, 3])
    assert isinstance(r, Trap) and r.kind == "out-of-bounds"


def test_c_division_truncates_toward_zero():
    assert c_div(-7, 2) == -3 and c_mod(-7, 2) == -1
    assert c_div(7, -2) == -3 and c_mod(7, -2) == 1


def test_wraparound():
    assert wrap(INT_MAX + 1) == INT_MIN
    assert arith("*", INT_MAX, 2) == -2
    assert arith("/", INT_MIN, -1) == INT_MIN


def test_arrays_are_passed_by_reference():
    src = """
    fn set(a[2]) { a[0] = 9; return 0; }
    fn f(a[2]) { r = set(a); return a[0] + r; }
    """
    assert run(src, a=[1, 2]) == 9


def test_for_bounds_evaluated_once():
    src = "fn f(n) { s = 0; for i in 0..n { n = n + 1; s = s + 1; } return s; }"
    assert run(src, n=3) == 3


def test_short_circuit_avoids_trap():
    assert run("fn f(x) { if (x != 0 && 10 / x > 1) { return 1; } return 0; }", x=0) == 0


def test_fuel_limit():
    with pytest.raises(FuelExhausted):
        interpret(parse_program("fn f(x) { while (1) { x = x + 1; } return x; }"), {"x": 0}, fuel=1000)


def test_trace_records_branch_decisions():
    p = parse_program("fn f(x) { if (x > 0) { return 1; } return 0; }")
    t1, t2 = [], []
    interpret(p, {"x": 5}, trace=t1)
    interpret(p, {"x": -5}, trace=t2)
    assert t1 and t2 and t1 != t2
