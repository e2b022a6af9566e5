import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CORPUS_PROGRAMS, load_corpus
from verimodel.frontend import ParseError, parse_expr, parse_program, validate
from verimodel.ir import (
    INT_MAX,
    INT_MIN,
    Binary,
    Const,
    For,
    Function,
    If,
    Load,
    Param,
    Program,
    Return,
    Unary,
    Var,
    While,
    Assign,
    Store,
    format_expr,
    format_program,
    node_count,
)


def test_minimal_function():
    p = parse_program("fn f(x) { return x; }")
    assert len(p.functions) == 1
    assert len(p.functions[0].body) == 1
    assert p.entry == "f"


def test_if_with_comparison():
    p = parse_program("fn f(x) { if (x > 0) { return 1; } else { return 0; } }")
    (stmt,) = p.functions[0].body
    assert isinstance(stmt, If)
    assert stmt.cond == Binary(">", Var("x"), Const(0))


def test_missing_expression_reports_position():
    with pytest.raises(ParseError) as info:
        parse_program("fn f(x) { return ; }")
    assert (info.value.line, info.value.col) == (1, 18)


def test_comments_and_entry_declaration():
    src = """
    // helper first
    fn g(x) { return x + 1; }
    fn f(y) { r = g(y); return r; } // trailing
    entry g;
    """
    p = parse_program(src)
    assert p.entry == "g"
    assert [f.name for f in p.functions] == ["g", "f"]


def test_negative_literal_and_precedence():
    assert parse_expr("-5") == Const(-5)
    assert parse_expr("-x") == Unary("-", Var("x"))
    assert parse_expr("1 + 2 * 3") == Binary("+", Const(1), Binary("*", Const(2), Const(3)))
    assert parse_expr("a || b && c") == Binary("||", Var("a"), Binary("&&", Var("b"), Var("c")))
    assert format_expr(Unary("-", Const(5))) == "-(5)"


def test_ir_size_counts_statements_and_expressions():
    assert node_count(parse_program("fn f() { return 2 + 3; }").functions[0].body) == 4
    assert node_count(parse_program("fn f() { return 5; }").functions[0].body) == 2


def test_well_formed_program_validates_clean():
    src = "fn g(a[3], i) { return a[i]; }\nfn f(b[3]) { r = g(b, 1); return r; }"
    assert validate(parse_program(src)) == []


def test_undeclared_variable():
    diags = validate(parse_program("fn f(x) { return y; }"))
    assert [d.category for d in diags] == ["undefined-variable"]
    assert "y" in diags[0].message


def test_missing_return_on_a_branch():
    diags = validate(parse_program("fn f(x) { if (x > 0) { return 1; } }"))
    assert [d.category for d in diags] == ["missing-return"]


@pytest.mark.parametrize("src, category", [
    ("fn f(x) { return 1; }\nfn f(y) { return 2; }", "duplicate-name"),
    ("fn f(x, x) { return 1; }", "duplicate-name"),
    ("fn f(x) { r = g(x); return r; }", "unknown-callee"),
    ("fn f(x) { r = f(x); return r; }", "recursion"),
])
def test_other_diagnostics(src, category):
    assert category in [d.category for d in validate(parse_program(src))]


@pytest.mark.parametrize("name", CORPUS_PROGRAMS)
def test_corpus_round_trip(name):
    program, _ = load_corpus(name)
    assert validate(program) == []
    printed = format_program(program)
    again = parse_program(printed)
    assert again == program
    assert format_program(again) == printed


# -- generated round trips ---------------------------------------------------------

NAMES = st.sampled_from(["x", "y", "z", "acc", "i"])
ARRAYS = st.sampled_from(["a", "b"])
LITERALS = st.integers(min_value=INT_MIN, max_value=INT_MAX).map(Const)


def _exprs():
    leaves = st.one_of(LITERALS, NAMES.map(Var))
    return st.recursive(
        leaves,
        lambda sub: st.one_of(
            st.builds(Binary, st.sampled_from(["+", "-", "*", "/", "%", "<", "<=", ">", ">=",
                                               "==", "!=", "&&", "||"]), sub, sub),
            st.builds(Unary, st.sampled_from(["-", "!"]), sub),
            st.builds(Load, ARRAYS, sub),
        ),
        max_leaves=12,
    )


EXPRS = _exprs()


def _stmts():
    simple = st.one_of(
        st.builds(Assign, NAMES, EXPRS),
        st.builds(Store, ARRAYS, EXPRS, EXPRS),
        st.builds(Return, EXPRS),
    )
    blocks = lambda s: st.lists(s, min_size=0, max_size=3).map(tuple)  # noqa: E731
    return st.recursive(
        simple,
        lambda sub: st.one_of(
            st.builds(If, EXPRS, blocks(sub), blocks(sub)),
            st.builds(While, EXPRS, blocks(sub)),
            st.builds(For, NAMES, EXPRS, EXPRS, blocks(sub)),
        ),
        max_leaves=8,
    )


@settings(max_examples=200, deadline=None)
@given(EXPRS)
def test_expression_round_trip(e):
    assert parse_expr(format_expr(e)) == e


@settings(max_examples=150, deadline=None)
@given(st.lists(_stmts(), min_size=1, max_size=5))
def test_program_round_trip(body):
    f = Function("f", (Param("x"), Param("a", 4), Param("b", 2)), tuple(body))
    program = Program((f,), "f")
    assert parse_program(format_program(program)) == program
