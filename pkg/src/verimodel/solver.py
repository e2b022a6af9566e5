"""Branch-and-prune satisfiability over finite integer domains.

Terms are IR expressions built from integer literals, variables, unary
minus and the arithmetic operators ``+ - * / %``. They are evaluated over
unbounded integers; ``/`` truncates toward zero and ``x / 0 == x % 0 == 0``
(the symbolic executor guards real divisions before they reach the solver).

The search alternates interval propagation (HC4-style revise of each atom,
run to a fixpoint) with splitting the widest variable at its floor midpoint.
``propagation_steps`` counts atom revisions and ``splits`` counts bisections;
both are deterministic and serve as the cost of a query.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil, floor
from typing import Optional

from .interp import c_div, c_mod
from .ir import Binary, Const, Unary, Var, expr_vars

RELATIONS = ("<", "<=", "==", "!=")
_FLIP = {">": "<", ">=": "<="}
_NEGATE = {"<": "<=", "<=": "<", "==": "!=", "!=": "=="}

DEFAULT_SPLIT_CAP = 10**6


class BudgetExceeded(RuntimeError):
    """The split count passed the configured cap before an answer was found."""


@dataclass(frozen=True)
class Atom:
    lhs: object
    op: str
    rhs: object

    def __post_init__(self):
        if self.op not in RELATIONS:
            raise ValueError(f"atom relation must be one of {RELATIONS}, got {self.op!r}")

    @classmethod
    def make(cls, lhs, op: str, rhs) -> "Atom":
        """Build an atom, rewriting ``a > b`` as ``b < a`` and ``a >= b`` as ``b <= a``."""
        if op in _FLIP:
            return cls(rhs, _FLIP[op], lhs)
        return cls(lhs, op, rhs)

    def negate(self) -> "Atom":
        if self.op in ("<", "<="):
            return Atom(self.rhs, _NEGATE[self.op], self.lhs)
        return Atom(self.lhs, _NEGATE[self.op], self.rhs)

    def variables(self) -> set:
        return expr_vars(self.lhs) | expr_vars(self.rhs)

    def __str__(self) -> str:
        from .ir import format_expr
        return f"{format_expr(self.lhs)} {self.op} {format_expr(self.rhs)}"


@dataclass(frozen=True)
class Constraint:
    """Conjunction of atoms."""

    atoms: tuple = ()

    def variables(self) -> list:
        seen: dict = {}
        for a in self.atoms:
            for v in sorted(a.variables()):
                seen.setdefault(v, None)
        return list(seen)

    def __len__(self) -> int:
        return len(self.atoms)


@dataclass(frozen=True)
class SolverResult:
    status: str  # "SAT" | "UNSAT"
    witness: Optional[dict] = None
    propagation_steps: int = 0
    splits: int = 0
    n_atoms: int = 0
    n_vars: int = 0

    @property
    def sat(self) -> bool:
        return self.status == "SAT"


# -- exact evaluation ---------------------------------------------------------


def evaluate(e, assignment: dict) -> int:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return assignment[e.name]
    if isinstance(e, Unary):
        if e.op != "-":
            raise ValueError(f"unsupported operator {e.op!r} in solver term")
        return -evaluate(e.operand, assignment)
    if isinstance(e, Binary):
        a = evaluate(e.left, assignment)
        b = evaluate(e.right, assignment)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return c_div(a, b) if b else 0
        if e.op == "%":
            return c_mod(a, b) if b else 0
    raise ValueError(f"unsupported solver term {e!r}")


def holds(atom: Atom, assignment: dict) -> bool:
    a = evaluate(atom.lhs, assignment)
    b = evaluate(atom.rhs, assignment)
    if atom.op == "<":
        return a < b
    if atom.op == "<=":
        return a <= b
    if atom.op == "==":
        return a == b
    return a != b


def check_witness(c, assignment: dict) -> bool:
    """True iff every atom of ``c`` holds under ``assignment``."""
    atoms = c.atoms if isinstance(c, Constraint) else tuple(c)
    return all(holds(a, assignment) for a in atoms)


# -- interval arithmetic ------------------------------------------------------


def _corners(f, x, y):
    vals = [f(a, b) for a in x for b in y]
    return min(vals), max(vals)


def _nonzero_parts(y):
    lo, hi = y
    parts = []
    if lo <= -1:
        parts.append((lo, min(hi, -1)))
    if hi >= 1:
        parts.append((max(lo, 1), hi))
    return parts


def _ivl_div(x, y):
    lo, hi = None, None
    for part in _nonzero_parts(y):
        a, b = _corners(c_div, x, part)
        lo = a if lo is None else min(lo, a)
        hi = b if hi is None else max(hi, b)
    if y[0] <= 0 <= y[1]:
        lo = 0 if lo is None else min(lo, 0)
        hi = 0 if hi is None else max(hi, 0)
    return lo, hi


def _ivl_mod(x, y):
    m = max(abs(y[0]), abs(y[1]))
    if m == 0:
        return 0, 0
    bound = m - 1
    lo = 0 if x[0] >= 0 else max(x[0], -bound)
    hi = 0 if x[1] <= 0 else min(x[1], bound)
    return lo, hi


def interval(e, dom: dict):
    if isinstance(e, Const):
        return e.value, e.value
    if isinstance(e, Var):
        return dom[e.name]
    if isinstance(e, Unary):
        lo, hi = interval(e.operand, dom)
        return -hi, -lo
    x = interval(e.left, dom)
    y = interval(e.right, dom)
    op = e.op
    if op == "+":
        return x[0] + y[0], x[1] + y[1]
    if op == "-":
        return x[0] - y[1], x[1] - y[0]
    if op == "*":
        return _corners(lambda a, b: a * b, x, y)
    if op == "/":
        return _ivl_div(x, y)
    if op == "%":
        return _ivl_mod(x, y)
    raise ValueError(f"unsupported solver term {e!r}")


class _Empty(Exception):
    pass


def _meet(a, b):
    lo, hi = max(a[0], b[0]), min(a[1], b[1])
    if lo > hi:
        raise _Empty
    return lo, hi


def _quotient_hull(t, y):
    """Integer hull of {v / w : v in t, w in y}, y not containing 0."""
    qs = [Fraction(v, w) for v in t for w in y]
    return ceil(min(qs)), floor(max(qs))


def _narrow(e, target, dom: dict, changed: set) -> None:
    """Shrink variable domains so that ``e`` can take a value in ``target``."""
    target = _meet(interval(e, dom), target)
    if isinstance(e, Const):
        return
    if isinstance(e, Var):
        old = dom[e.name]
        if target != old:
            dom[e.name] = target
            changed.add(e.name)
        return
    if isinstance(e, Unary):
        _narrow(e.operand, (-target[1], -target[0]), dom, changed)
        return
    op = e.op
    if op == "+":
        y = interval(e.right, dom)
        _narrow(e.left, (target[0] - y[1], target[1] - y[0]), dom, changed)
        x = interval(e.left, dom)
        _narrow(e.right, (target[0] - x[1], target[1] - x[0]), dom, changed)
    elif op == "-":
        y = interval(e.right, dom)
        _narrow(e.left, (target[0] + y[0], target[1] + y[1]), dom, changed)
        x = interval(e.left, dom)
        _narrow(e.right, (x[0] - target[1], x[1] - target[0]), dom, changed)
    elif op == "*":
        for this, other in ((e.left, e.right), (e.right, e.left)):
            y = interval(other, dom)
            if target[0] <= 0 <= target[1] and y[0] <= 0 <= y[1]:
                continue
            parts = _nonzero_parts(y)
            if not parts:
                raise _Empty  # other == 0 but 0 not in target
            hulls = [_quotient_hull(target, p) for p in parts]
            lo = min(h[0] for h in hulls)
            hi = max(h[1] for h in hulls)
            if lo > hi:
                raise _Empty
            _narrow(this, (lo, hi), dom, changed)
    # "/" and "%" only prune via the forward interval check above


def _revise(atom: Atom, dom: dict, changed: set) -> None:
    lhs, rhs = atom.lhs, atom.rhs
    x = interval(lhs, dom)
    y = interval(rhs, dom)
    op = atom.op
    if op == "<":
        tx, ty = (x[0], min(x[1], y[1] - 1)), (max(y[0], x[0] + 1), y[1])
    elif op == "<=":
        tx, ty = (x[0], min(x[1], y[1])), (max(y[0], x[0]), y[1])
    elif op == "==":
        tx = ty = _meet(x, y)
    else:
        tx, ty = x, y
        if x[0] == x[1] == y[0] == y[1]:
            raise _Empty
        if x[0] == x[1]:
            v = x[0]
            ty = (y[0] + (y[0] == v), y[1] - (y[1] == v))
        elif y[0] == y[1]:
            v = y[0]
            tx = (x[0] + (x[0] == v), x[1] - (x[1] == v))
    if tx[0] > tx[1] or ty[0] > ty[1]:
        raise _Empty
    if tx != x:
        _narrow(lhs, tx, dom, changed)
    if ty != y:
        _narrow(rhs, ty, dom, changed)


def _entailed(atom: Atom, dom: dict) -> bool:
    x = interval(atom.lhs, dom)
    y = interval(atom.rhs, dom)
    if atom.op == "<":
        return x[1] < y[0]
    if atom.op == "<=":
        return x[1] <= y[0]
    if atom.op == "==":
        return x[0] == x[1] == y[0] == y[1]
    return x[1] < y[0] or y[1] < x[0]


@dataclass
class _Counters:
    steps: int = 0
    splits: int = 0


def _propagate(atoms, watch: dict, dom: dict, counters: _Counters) -> bool:
    queue = deque(range(len(atoms)))
    queued = set(queue)
    while queue:
        i = queue.popleft()
        queued.discard(i)
        counters.steps += 1
        changed: set = set()
        try:
            _revise(atoms[i], dom, changed)
        except _Empty:
            return False
        for v in changed:
            for j in watch[v]:
                if j not in queued:
                    queue.append(j)
                    queued.add(j)
    return True


def decide(c, domains: dict, *, split_cap: int = DEFAULT_SPLIT_CAP) -> SolverResult:
    """Decide ``c`` over the finite box ``domains`` (var -> (lo, hi)).

    Sound and complete: SAT iff some integer assignment inside the domains
    satisfies every atom. A SAT witness assigns every variable in
    ``domains``. Raises :class:`BudgetExceeded` past ``split_cap`` splits.
    """
    atoms = c.atoms if isinstance(c, Constraint) else tuple(c)
    order = list(domains)
    watch: dict = {v: [] for v in order}
    for i, a in enumerate(atoms):
        for v in a.variables():
            if v not in domains:
                raise ValueError(f"variable {v!r} has no domain")
            watch[v].append(i)
    for v, (lo, hi) in domains.items():
        if lo > hi:
            raise ValueError(f"empty domain for {v!r}")
    atom_vars = [v for v in order if watch[v]]
    counters = _Counters()

    def result(status, witness=None):
        return SolverResult(status, witness, counters.steps, counters.splits, len(atoms), len(atom_vars))

    stack = [{v: tuple(domains[v]) for v in order}]
    while stack:
        dom = stack.pop()
        if not _propagate(atoms, watch, dom, counters):
            continue
        if all(dom[v][0] == dom[v][1] for v in atom_vars):
            point = {v: dom[v][0] for v in order}
            if check_witness(atoms, point):
                return result("SAT", point)
            continue
        if all(_entailed(a, dom) for a in atoms):
            return result("SAT", {v: dom[v][0] for v in order})
        # widest atom variable; ties go to the earliest declared
        var = max(atom_vars, key=lambda v: (dom[v][1] - dom[v][0], -order.index(v)))
        lo, hi = dom[var]
        mid = (lo + hi) // 2
        counters.splits += 1
        if counters.splits > split_cap:
            raise BudgetExceeded(f"split cap {split_cap} exceeded")
        right = dict(dom)
        right[var] = (mid + 1, hi)
        left = dict(dom)
        left[var] = (lo, mid)
        stack.append(right)
        stack.append(left)
    return result("UNSAT")
