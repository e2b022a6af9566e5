"""White-box features computed from (optimized) code and a SymbolSpec."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .ir import (
    Assign,
    Binary,
    CallAssign,
    Const,
    For,
    Function,
    If,
    Load,
    Loc,
    Store,
    Unary,
    Var,
    While,
    expr_vars,
    node_count,
    walk,
    walk_block,
)
from .symbols import SymbolSpec

FIXED_COLUMNS = (
    "cc",
    "n_sym_loops",
    "sym_loop_body_total",
    "sym_loop_body_max",
    "n_sym_branches_linear",
    "n_sym_branches_nonlinear",
    "n_sym_params",
    "array_size_total",
    "array_size_max",
)


@dataclass(frozen=True)
class BranchInfo:
    loc: Optional[Loc]
    is_symbolic: bool
    is_linear: Optional[bool]  # None unless is_symbolic


@dataclass(frozen=True)
class LoopInfo:
    loc: Optional[Loc]
    is_symbolic: bool
    body_instruction_count: int


@dataclass(frozen=True)
class FeatureVector:
    cc: int
    n_sym_loops: int = 0
    sym_loop_body_total: int = 0
    sym_loop_body_max: int = 0
    n_sym_branches_linear: int = 0
    n_sym_branches_nonlinear: int = 0
    n_sym_params: int = 0
    array_size_total: int = 0
    array_size_max: int = 0
    scalar_values: dict = field(default_factory=dict)
    domain_widths: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        """Flat mapping in CSV column order: the fixed counts, then
        ``value_<param>`` / ``width_<param>`` columns sorted by name."""
        out = {c: getattr(self, c) for c in FIXED_COLUMNS}
        named = {f"value_{k}": v for k, v in self.scalar_values.items()}
        named.update({f"width_{k}": v for k, v in self.domain_widths.items()})
        for k in sorted(named):
            out[k] = named[k]
        return out

    def columns(self) -> list:
        return list(self.as_dict())

    def row(self) -> list:
        return list(self.as_dict().values())


def cyclomatic_complexity(f: Function) -> int:
    """1 + ifs + loops + short-circuit operators inside if/while conditions."""
    cc = 1
    for n in walk_block(f.body):
        if isinstance(n, (If, While)):
            cc += 1
            cc += sum(1 for e in walk(n.cond) if isinstance(e, Binary) and e.op in ("&&", "||"))
        elif isinstance(n, For):
            cc += 1
    return cc


def tainted_names(f: Function, spec: SymbolSpec) -> set:
    """Scalars and arrays whose value may depend on a symbolic parameter.

    Flow-insensitive forward data-dependence closure; array stores taint the
    whole array, calls taint their result and any array passed in.
    """
    tainted = {p.name for p in f.params if p.name in spec and spec[p.name].symbolic}
    stmts = [n for n in walk_block(f.body) if isinstance(n, (Assign, Store, For, CallAssign))]
    changed = True
    while changed:
        changed = False
        for s in stmts:
            if isinstance(s, Assign):
                hit = expr_vars(s.value) & tainted
                new = {s.target} if hit else set()
            elif isinstance(s, Store):
                hit = (expr_vars(s.index) | expr_vars(s.value)) & tainted
                new = {s.array} if hit else set()
            elif isinstance(s, For):
                hit = (expr_vars(s.lo) | expr_vars(s.hi)) & tainted
                new = {s.var} if hit else set()
            else:
                reads = set().union(*(expr_vars(a) for a in s.args)) if s.args else set()
                hit = reads & tainted
                new = {s.target} | {a.name for a in s.args if isinstance(a, Var) and f.param(a.name)
                                    and f.param(a.name).is_array} if hit else set()
            if new - tainted:
                tainted |= new
                changed = True
    return tainted


_NONLINEAR = 1 << 30


def _degree(e, tainted: set) -> int:
    """Polynomial degree of ``e`` in symbolic quantities (``_NONLINEAR`` for
    symbolic divisors)."""
    if isinstance(e, Const):
        return 0
    if isinstance(e, Var):
        return int(e.name in tainted)
    if isinstance(e, Load):
        d = _degree(e.index, tainted)
        return d if d > 1 else int(d > 0 or e.array in tainted)
    if isinstance(e, Unary):
        return _degree(e.operand, tainted)
    a = _degree(e.left, tainted)
    b = _degree(e.right, tainted)
    if e.op == "*":
        return min(a + b, _NONLINEAR)
    if e.op in ("/", "%"):
        return _NONLINEAR if b > 0 else a
    return max(a, b)


def classify_branch(cond, spec: SymbolSpec, f: Function, tainted: Optional[set] = None) -> BranchInfo:
    """Symbolic iff the condition reads a symbolic-dependent value; linear
    iff it is a boolean combination of affine relations."""
    if tainted is None:
        tainted = tainted_names(f, spec)
    if not expr_vars(cond) & tainted:
        return BranchInfo(cond.loc, False, None)
    return BranchInfo(cond.loc, True, _degree(cond, tainted) <= 1)


def analyze_loops(f: Function, spec: SymbolSpec, tainted: Optional[set] = None) -> list:
    if tainted is None:
        tainted = tainted_names(f, spec)
    out = []
    for n in walk_block(f.body):
        if isinstance(n, While):
            reads = expr_vars(n.cond)
        elif isinstance(n, For):
            reads = expr_vars(n.lo) | expr_vars(n.hi)
        else:
            continue
        out.append(LoopInfo(n.loc, bool(reads & tainted), node_count(n.body)))
    return out


def branches(f: Function, spec: SymbolSpec, tainted: Optional[set] = None) -> list:
    if tainted is None:
        tainted = tainted_names(f, spec)
    return [classify_branch(n.cond, spec, f, tainted) for n in walk_block(f.body) if isinstance(n, If)]


def extract_features(f: Function, spec: SymbolSpec) -> FeatureVector:
    tainted = tainted_names(f, spec)
    sym_loops = [li.body_instruction_count for li in analyze_loops(f, spec, tainted) if li.is_symbolic]
    brs = [b for b in branches(f, spec, tainted) if b.is_symbolic]
    sizes = [p.length for p in f.params if p.is_array]
    scalar_values, domain_widths = {}, {}
    n_sym = 0
    for p in f.params:
        ps = spec[p.name]
        n_sym += ps.symbolic
        if not p.is_array:
            if ps.symbolic:
                domain_widths[p.name] = ps.width
            else:
                scalar_values[p.name] = ps.value
    return FeatureVector(
        cc=cyclomatic_complexity(f),
        n_sym_loops=len(sym_loops),
        sym_loop_body_total=sum(sym_loops),
        sym_loop_body_max=max(sym_loops, default=0),
        n_sym_branches_linear=sum(1 for b in brs if b.is_linear),
        n_sym_branches_nonlinear=sum(1 for b in brs if not b.is_linear),
        n_sym_params=n_sym,
        array_size_total=sum(sizes),
        array_size_max=max(sizes, default=0),
        scalar_values=scalar_values,
        domain_widths=domain_widths,
    )
