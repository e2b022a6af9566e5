"""Tree-form intermediate representation for MiniC programs.

Nodes are frozen dataclasses, so structural equality is plain ``==`` and
values can be shared freely between threads and between program versions.
Source locations are carried on every node but excluded from equality,
which keeps ``parse(print(p)) == p`` meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

INT_MIN = -(1 << 63)
INT_MAX = (1 << 63) - 1


@dataclass(frozen=True)
class Loc:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


def _loc() -> Optional[Loc]:
    return field(default=None, compare=False, repr=False)


# -- expressions -------------------------------------------------------------

ARITH_OPS = ("+", "-", "*", "/", "%")
REL_OPS = ("<", "<=", ">", ">=", "==", "!=")
LOGIC_OPS = ("&&", "||")
BINARY_OPS = ARITH_OPS + REL_OPS + LOGIC_OPS
UNARY_OPS = ("-", "!")


@dataclass(frozen=True)
class Const:
    value: int
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class Var:
    name: str
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class Load:
    array: str
    index: "Expr"
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    loc: Optional[Loc] = _loc()


Expr = Union[Const, Var, Load, Unary, Binary]


# -- statements --------------------------------------------------------------


@dataclass(frozen=True)
class Assign:
    target: str
    value: Expr
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class Store:
    array: str
    index: Expr
    value: Expr
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class If:
    cond: Expr
    then: tuple
    orelse: tuple = ()
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class While:
    cond: Expr
    body: tuple
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class For:
    """``for var in lo..hi``: bounds are evaluated once on entry and ``var``
    is set to ``lo + k`` at the start of iteration ``k``."""

    var: str
    lo: Expr
    hi: Expr
    body: tuple
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class Return:
    value: Expr
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class CallAssign:
    target: str
    func: str
    args: tuple
    loc: Optional[Loc] = _loc()


Stmt = Union[Assign, Store, If, While, For, Return, CallAssign]


@dataclass(frozen=True)
class Param:
    name: str
    length: Optional[int] = None  # None for scalars
    loc: Optional[Loc] = _loc()

    @property
    def is_array(self) -> bool:
        return self.length is not None


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple
    body: tuple
    loc: Optional[Loc] = _loc()

    def param(self, name: str) -> Optional[Param]:
        for p in self.params:
            if p.name == name:
                return p
        return None


@dataclass(frozen=True)
class Program:
    functions: tuple
    entry: str

    def function(self, name: str) -> Optional[Function]:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    @property
    def entry_function(self) -> Function:
        f = self.function(self.entry)
        if f is None:
            raise KeyError(f"entry function {self.entry!r} is not defined")
        return f

    def replace_function(self, new: Function) -> "Program":
        funcs = tuple(new if f.name == new.name else f for f in self.functions)
        return Program(funcs, self.entry)


# -- traversal ---------------------------------------------------------------


def children(node) -> tuple:
    """Direct IR children (statements and expressions) of a node."""
    if isinstance(node, (Const, Var)):
        return ()
    if isinstance(node, Load):
        return (node.index,)
    if isinstance(node, Unary):
        return (node.operand,)
    if isinstance(node, Binary):
        return (node.left, node.right)
    if isinstance(node, Assign):
        return (node.value,)
    if isinstance(node, Store):
        return (node.index, node.value)
    if isinstance(node, If):
        return (node.cond,) + node.then + node.orelse
    if isinstance(node, While):
        return (node.cond,) + node.body
    if isinstance(node, For):
        return (node.lo, node.hi) + node.body
    if isinstance(node, Return):
        return (node.value,)
    if isinstance(node, CallAssign):
        return tuple(node.args)
    raise TypeError(f"not an IR node: {node!r}")


def walk(node) -> Iterator:
    """Pre-order iteration over a node and all of its descendants."""
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(children(n)))


def walk_block(stmts) -> Iterator:
    for s in stmts:
        yield from walk(s)


def node_count(obj) -> int:
    """IR size: number of statement and expression nodes.

    Accepts a Program, a Function, a statement tuple or a single node.
    """
    if isinstance(obj, Program):
        return sum(node_count(f) for f in obj.functions)
    if isinstance(obj, Function):
        return node_count(obj.body)
    if isinstance(obj, tuple):
        return sum(1 for _ in walk_block(obj))
    return sum(1 for _ in walk(obj))


def expr_vars(e: Expr) -> set:
    """Names of scalar variables and arrays read by an expression."""
    out = set()
    for n in walk(e):
        if isinstance(n, Var):
            out.add(n.name)
        elif isinstance(n, Load):
            out.add(n.array)
    return out


def assigned_vars(stmts) -> set:
    """Scalar names written anywhere in a block (including loop variables)."""
    out = set()
    for n in walk_block(stmts):
        if isinstance(n, (Assign, CallAssign)):
            out.add(n.target)
        elif isinstance(n, For):
            out.add(n.var)
    return out


def may_trap(e: Expr) -> bool:
    """Whether evaluating ``e`` could trap (division by a non-literal or
    zero divisor, or any array access)."""
    for n in walk(e):
        if isinstance(n, Load):
            return True
        if isinstance(n, Binary) and n.op in ("/", "%"):
            if not (isinstance(n.right, Const) and n.right.value != 0):
                return True
    return False


def always_returns(stmts) -> bool:
    """Every path through the block reaches a ``return`` (loops are not
    assumed to return)."""
    for s in stmts:
        if isinstance(s, Return):
            return True
        if isinstance(s, If) and always_returns(s.then) and always_returns(s.orelse):
            return True
    return False


# -- printing ----------------------------------------------------------------

_PREC = {
    "||": 1,
    "&&": 2,
    "<": 3, "<=": 3, ">": 3, ">=": 3, "==": 3, "!=": 3,
    "+": 4, "-": 4,
    "*": 5, "/": 5, "%": 5,
}
_UNARY_PREC = 6


def format_expr(e: Expr, parent_prec: int = 0) -> str:
    if isinstance(e, Const):
        text = str(e.value)
        # a negative literal binds like a unary operator
        return f"({text})" if e.value < 0 and parent_prec > _UNARY_PREC else text
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Load):
        return f"{e.array}[{format_expr(e.index)}]"
    if isinstance(e, Unary):
        inner = e.operand
        body = format_expr(inner, _UNARY_PREC)
        if e.op == "-" and isinstance(inner, Const):
            # keeps -(5) distinct from the literal -5 on re-parse
            body = f"({format_expr(inner)})"
        text = f"{e.op}{body}"
        return f"({text})" if parent_prec > _UNARY_PREC else text
    if isinstance(e, Binary):
        p = _PREC[e.op]
        left = format_expr(e.left, p)
        right = format_expr(e.right, p + 1)
        text = f"{left} {e.op} {right}"
        return f"({text})" if p < parent_prec else text
    raise TypeError(f"not an expression: {e!r}")


def _format_block(stmts, indent: int, out: list) -> None:
    pad = "    " * indent
    for s in stmts:
        if isinstance(s, Assign):
            out.append(f"{pad}{s.target} = {format_expr(s.value)};")
        elif isinstance(s, Store):
            out.append(f"{pad}{s.array}[{format_expr(s.index)}] = {format_expr(s.value)};")
        elif isinstance(s, CallAssign):
            args = ", ".join(format_expr(a) for a in s.args)
            out.append(f"{pad}{s.target} = {s.func}({args});")
        elif isinstance(s, Return):
            out.append(f"{pad}return {format_expr(s.value)};")
        elif isinstance(s, If):
            out.append(f"{pad}if ({format_expr(s.cond)}) {{")
            _format_block(s.then, indent + 1, out)
            if s.orelse:
                out.append(f"{pad}}} else {{")
                _format_block(s.orelse, indent + 1, out)
            out.append(f"{pad}}}")
        elif isinstance(s, While):
            out.append(f"{pad}while ({format_expr(s.cond)}) {{")
            _format_block(s.body, indent + 1, out)
            out.append(f"{pad}}}")
        elif isinstance(s, For):
            out.append(f"{pad}for {s.var} in {format_expr(s.lo, 4)}..{format_expr(s.hi, 4)} {{")
            _format_block(s.body, indent + 1, out)
            out.append(f"{pad}}}")
        else:
            raise TypeError(f"not a statement: {s!r}")


def format_function(f: Function) -> str:
    params = ", ".join(p.name if p.length is None else f"{p.name}[{p.length}]" for p in f.params)
    out = [f"fn {f.name}({params}) {{"]
    _format_block(f.body, 1, out)
    out.append("}")
    return "\n".join(out)


def format_program(p: Program) -> str:
    """Canonical source text; re-parses to a structurally equal Program."""
    parts = [format_function(f) for f in p.functions]
    if p.functions and p.functions[-1].name != p.entry:
        parts.append(f"entry {p.entry};")
    return "\n\n".join(parts) + "\n"
