"""Verification-oriented IR transformations.

The default pipeline runs constant folding, constant propagation, dead-code
elimination, unrolling of loops with literal bounds, and inlining, in that
order. :func:`optimize` repeats the pipeline until the program stops
changing, so ``optimize(optimize(p, c), c) == optimize(p, c)``.

Every pass preserves the concrete semantics of the entry function,
including which inputs trap.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .interp import arith, wrap
from .ir import (
    Assign,
    Binary,
    CallAssign,
    Const,
    For,
    Function,
    If,
    Load,
    Program,
    Return,
    Store,
    Unary,
    Var,
    While,
    always_returns,
    assigned_vars,
    expr_vars,
    may_trap,
    node_count,
    walk_block,
)

FOLD = "constant-fold"
PROPAGATE = "constant-propagate"
DCE = "dead-code-eliminate"
UNROLL = "unroll-concrete-loops"
INLINE = "inline"
PASS_NAMES = (FOLD, PROPAGATE, DCE, UNROLL, INLINE)

MAX_ROUNDS = 16


class UnrollBudgetExceeded(Exception):
    """A literal-bound loop was left rolled because its trip count exceeds
    ``max_body_copies``. Recorded as a note, never raised by optimize()."""


@dataclass(frozen=True)
class OptConfig:
    passes: tuple = PASS_NAMES
    max_body_copies: int = 16
    max_depth: int = 4

    def __post_init__(self):
        unknown = [p for p in self.passes if p not in PASS_NAMES]
        if unknown:
            raise ValueError(f"unknown optimizer passes: {unknown}")
        if self.max_body_copies < 1 or self.max_depth < 1:
            raise ValueError("max_body_copies and max_depth must be >= 1")


@dataclass
class OptResult:
    program: Program
    trace: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    rounds: int = 0


# -- constant folding ---------------------------------------------------------

_BOOLEAN_OPS = ("<", "<=", ">", ">=", "==", "!=", "&&", "||")


def _as_truth(e):
    """Expression with the truth value of ``e`` as 0/1."""
    if isinstance(e, Binary) and e.op in _BOOLEAN_OPS:
        return e
    if isinstance(e, Unary) and e.op == "!":
        return e
    if isinstance(e, Const):
        return Const(int(e.value != 0), e.loc)
    return Binary("!=", e, Const(0), e.loc)


def fold_expr(e):
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, Load):
        return Load(e.array, fold_expr(e.index), e.loc)
    if isinstance(e, Unary):
        v = fold_expr(e.operand)
        if isinstance(v, Const):
            return Const(wrap(-v.value) if e.op == "-" else int(v.value == 0), e.loc)
        return Unary(e.op, v, e.loc)
    a = fold_expr(e.left)
    b = fold_expr(e.right)
    op = e.op
    if op in ("&&", "||"):
        if isinstance(a, Const):
            short = (a.value == 0) if op == "&&" else (a.value != 0)
            if short:
                return Const(int(op == "||"), e.loc)
            return _as_truth(b)
        return Binary(op, a, b, e.loc)
    if isinstance(a, Const) and isinstance(b, Const):
        if op in ("/", "%") and b.value == 0:
            return Binary(op, a, b, e.loc)
        return Const(arith(op, a.value, b.value), e.loc)
    # algebraic identities x+0, x-0, x*1, x*0 (the last only when x cannot trap)
    if op == "+":
        if isinstance(b, Const) and b.value == 0:
            return a
        if isinstance(a, Const) and a.value == 0:
            return b
    elif op == "-":
        if isinstance(b, Const) and b.value == 0:
            return a
    elif op == "*":
        for x, y in ((a, b), (b, a)):
            if isinstance(y, Const) and y.value == 1:
                return x
            if isinstance(y, Const) and y.value == 0 and not may_trap(x):
                return Const(0, e.loc)
    elif op == "/":
        if isinstance(b, Const) and b.value == 1:
            return a
    return Binary(op, a, b, e.loc)


def _map_exprs(stmts, fn) -> tuple:
    out = []
    for s in stmts:
        if isinstance(s, Assign):
            out.append(Assign(s.target, fn(s.value), s.loc))
        elif isinstance(s, Store):
            out.append(Store(s.array, fn(s.index), fn(s.value), s.loc))
        elif isinstance(s, Return):
            out.append(Return(fn(s.value), s.loc))
        elif isinstance(s, CallAssign):
            out.append(CallAssign(s.target, s.func, tuple(fn(a) for a in s.args), s.loc))
        elif isinstance(s, If):
            out.append(If(fn(s.cond), _map_exprs(s.then, fn), _map_exprs(s.orelse, fn), s.loc))
        elif isinstance(s, While):
            out.append(While(fn(s.cond), _map_exprs(s.body, fn), s.loc))
        elif isinstance(s, For):
            out.append(For(s.var, fn(s.lo), fn(s.hi), _map_exprs(s.body, fn), s.loc))
        else:
            raise TypeError(f"not a statement: {s!r}")
    return tuple(out)


def constant_fold(f: Function) -> Function:
    return Function(f.name, f.params, _map_exprs(f.body, fold_expr), f.loc)


# -- constant propagation -----------------------------------------------------


def _substitute(e, env: dict):
    if isinstance(e, Var):
        return Const(env[e.name], e.loc) if e.name in env else e
    if isinstance(e, Const):
        return e
    if isinstance(e, Load):
        return Load(e.array, _substitute(e.index, env), e.loc)
    if isinstance(e, Unary):
        return Unary(e.op, _substitute(e.operand, env), e.loc)
    return Binary(e.op, _substitute(e.left, env), _substitute(e.right, env), e.loc)


def _propagate_block(stmts, env: dict):
    """Returns (new statements, env after, whether the end is reachable)."""
    out = []
    for s in stmts:
        sub = lambda e: fold_expr(_substitute(e, env))  # noqa: E731
        if isinstance(s, Assign):
            v = sub(s.value)
            out.append(Assign(s.target, v, s.loc))
            if isinstance(v, Const):
                env[s.target] = v.value
            else:
                env.pop(s.target, None)
        elif isinstance(s, Store):
            out.append(Store(s.array, sub(s.index), sub(s.value), s.loc))
        elif isinstance(s, CallAssign):
            out.append(CallAssign(s.target, s.func, tuple(sub(a) for a in s.args), s.loc))
            env.pop(s.target, None)
        elif isinstance(s, Return):
            out.append(Return(sub(s.value), s.loc))
            return tuple(out) + tuple(stmts[len(out):]), {}, False
        elif isinstance(s, If):
            cond = sub(s.cond)
            then, e1, r1 = _propagate_block(s.then, dict(env))
            orelse, e2, r2 = _propagate_block(s.orelse, dict(env))
            out.append(If(cond, then, orelse, s.loc))
            if r1 and r2:
                env = {k: v for k, v in e1.items() if e2.get(k) == v}
            elif r1:
                env = e1
            elif r2:
                env = e2
            else:
                return tuple(out) + tuple(stmts[len(out):]), {}, False
        elif isinstance(s, While):
            for name in assigned_vars(s.body):
                env.pop(name, None)
            cond = fold_expr(_substitute(s.cond, env))
            body, _, _ = _propagate_block(s.body, dict(env))
            out.append(While(cond, body, s.loc))
        elif isinstance(s, For):
            lo, hi = sub(s.lo), sub(s.hi)
            for name in assigned_vars(s.body) | {s.var}:
                env.pop(name, None)
            body, _, _ = _propagate_block(s.body, dict(env))
            out.append(For(s.var, lo, hi, body, s.loc))
        else:
            raise TypeError(f"not a statement: {s!r}")
    return tuple(out), env, True


def constant_propagate(f: Function) -> Function:
    body, _, _ = _propagate_block(f.body, {})
    return Function(f.name, f.params, body, f.loc)


# -- dead code elimination ----------------------------------------------------


def _static_truth(cond):
    """0/1 if ``cond`` reads no variables and cannot trap, else None."""
    if isinstance(cond, Const):
        return int(cond.value != 0)
    if expr_vars(cond) or may_trap(cond):
        return None
    folded = fold_expr(cond)
    return int(folded.value != 0) if isinstance(folded, Const) else None


def _prune_structure(stmts) -> tuple:
    """Remove statically dead branches/loops and code after a return."""
    out = []
    for s in stmts:
        if isinstance(s, If):
            then, orelse = _prune_structure(s.then), _prune_structure(s.orelse)
            truth = _static_truth(s.cond)
            if truth is not None:
                out.extend(then if truth else orelse)
            elif not then and not orelse and not may_trap(s.cond):
                pass
            else:
                out.append(If(s.cond, then, orelse, s.loc))
        elif isinstance(s, While):
            if _static_truth(s.cond) == 0:
                continue
            out.append(While(s.cond, _prune_structure(s.body), s.loc))
        elif isinstance(s, For):
            if isinstance(s.lo, Const) and isinstance(s.hi, Const) and s.hi.value <= s.lo.value:
                continue
            out.append(For(s.var, s.lo, s.hi, _prune_structure(s.body), s.loc))
        else:
            out.append(s)
        if always_returns(out[-1:]):
            break
    return tuple(out)


def _uses(e) -> set:
    return {n for n in expr_vars(e)}


def _dead_stores(stmts, live_out: set):
    """Backward liveness; drops trap-free assignments to dead variables.

    Returns (new statements, live-in set).
    """
    live = set(live_out)
    out = []
    for s in reversed(stmts):
        if isinstance(s, Return):
            live = _uses(s.value)
            out.append(s)
        elif isinstance(s, Assign):
            if s.target not in live and not may_trap(s.value):
                continue
            live = (live - {s.target}) | _uses(s.value)
            out.append(s)
        elif isinstance(s, CallAssign):
            live = (live - {s.target}) | set().union(*(_uses(a) for a in s.args))
            out.append(s)
        elif isinstance(s, Store):
            live = live | _uses(s.index) | _uses(s.value)
            out.append(s)
        elif isinstance(s, If):
            then, l1 = _dead_stores(s.then, live)
            orelse, l2 = _dead_stores(s.orelse, live)
            live = l1 | l2 | _uses(s.cond)
            out.append(If(s.cond, then, orelse, s.loc))
        elif isinstance(s, While):
            head = live | _uses(s.cond)
            while True:
                body, body_in = _dead_stores(s.body, head)
                new_head = live | _uses(s.cond) | body_in
                if new_head == head:
                    break
                head = new_head
            live = head
            out.append(While(s.cond, body, s.loc))
        elif isinstance(s, For):
            head = set(live)
            while True:
                body, body_in = _dead_stores(s.body, head)
                new_head = live | (body_in - {s.var})
                if new_head == head:
                    break
                head = new_head
            live = head | _uses(s.lo) | _uses(s.hi)
            out.append(For(s.var, s.lo, s.hi, body, s.loc))
        else:
            raise TypeError(f"not a statement: {s!r}")
    return tuple(reversed(out)), live


def dead_code_eliminate(f: Function) -> Function:
    body = f.body
    while True:
        new, _ = _dead_stores(_prune_structure(body), set())
        if new == body:
            break
        body = new
    return Function(f.name, f.params, body, f.loc)


# -- loop unrolling -----------------------------------------------------------


def _unroll_block(stmts, budget: int, notes: list) -> tuple:
    out = []
    for s in stmts:
        if isinstance(s, If):
            out.append(If(s.cond, _unroll_block(s.then, budget, notes),
                          _unroll_block(s.orelse, budget, notes), s.loc))
        elif isinstance(s, While):
            out.append(While(s.cond, _unroll_block(s.body, budget, notes), s.loc))
        elif isinstance(s, For):
            body = _unroll_block(s.body, budget, notes)
            if isinstance(s.lo, Const) and isinstance(s.hi, Const):
                trip = max(0, s.hi.value - s.lo.value)
                if trip <= budget:
                    for k in range(trip):
                        out.append(Assign(s.var, Const(wrap(s.lo.value + k)), s.loc))
                        out.extend(body)
                    continue
                notes.append(UnrollBudgetExceeded(
                    f"loop at {s.loc} has {trip} iterations, budget is {budget}; left rolled"))
            out.append(For(s.var, s.lo, s.hi, body, s.loc))
        else:
            out.append(s)
    return tuple(out)


def unroll_concrete_loops(f: Function, max_body_copies: int, notes: list) -> Function:
    return Function(f.name, f.params, _unroll_block(f.body, max_body_copies, notes), f.loc)


# -- inlining -----------------------------------------------------------------


class _NotInlinable(Exception):
    pass


def _returns_to_assign(stmts, target: str) -> tuple:
    """Rewrite a block so each ``return e`` becomes ``target = e`` and control
    falls through to the end of the block instead."""
    for i, s in enumerate(stmts):
        if isinstance(s, Return):
            return tuple(stmts[:i]) + (Assign(target, s.value, s.loc),)
        if isinstance(s, (While, For)):
            if any(isinstance(n, Return) for n in walk_block(s.body)):
                raise _NotInlinable("return inside a loop")
        if isinstance(s, If) and any(isinstance(n, Return) for n in walk_block(s.then + s.orelse)):
            rest = tuple(stmts[i + 1:])
            then = s.then if always_returns(s.then) else s.then + rest
            orelse = s.orelse if always_returns(s.orelse) else s.orelse + rest
            return tuple(stmts[:i]) + (If(s.cond, _returns_to_assign(then, target),
                                           _returns_to_assign(orelse, target), s.loc),)
    return tuple(stmts)


def _rename_expr(e, scalars: dict, arrays: dict):
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        if e.name in arrays:
            return Var(arrays[e.name], e.loc)
        return Var(scalars[e.name], e.loc)
    if isinstance(e, Load):
        return Load(arrays[e.array], _rename_expr(e.index, scalars, arrays), e.loc)
    if isinstance(e, Unary):
        return Unary(e.op, _rename_expr(e.operand, scalars, arrays), e.loc)
    return Binary(e.op, _rename_expr(e.left, scalars, arrays), _rename_expr(e.right, scalars, arrays), e.loc)


def _rename_block(stmts, scalars: dict, arrays: dict) -> tuple:
    r = lambda e: _rename_expr(e, scalars, arrays)  # noqa: E731
    out = []
    for s in stmts:
        if isinstance(s, Assign):
            out.append(Assign(scalars[s.target], r(s.value), s.loc))
        elif isinstance(s, Store):
            out.append(Store(arrays[s.array], r(s.index), r(s.value), s.loc))
        elif isinstance(s, Return):
            out.append(Return(r(s.value), s.loc))
        elif isinstance(s, CallAssign):
            out.append(CallAssign(scalars[s.target], s.func, tuple(r(a) for a in s.args), s.loc))
        elif isinstance(s, If):
            out.append(If(r(s.cond), _rename_block(s.then, scalars, arrays),
                          _rename_block(s.orelse, scalars, arrays), s.loc))
        elif isinstance(s, While):
            out.append(While(r(s.cond), _rename_block(s.body, scalars, arrays), s.loc))
        elif isinstance(s, For):
            out.append(For(scalars[s.var], r(s.lo), r(s.hi), _rename_block(s.body, scalars, arrays), s.loc))
    return tuple(out)


def _scalar_names(f: Function) -> set:
    names = {p.name for p in f.params if not p.is_array} | assigned_vars(f.body)
    for n in walk_block(f.body):
        if isinstance(n, Var):
            names.add(n.name)
    return names - {p.name for p in f.params if p.is_array}


class _Inliner:
    def __init__(self, program: Program, max_depth: int, notes: list):
        self.funcs = {f.name: f for f in program.functions}
        self.max_depth = max_depth
        self.notes = notes

    def run(self, f: Function) -> Function:
        self.taken = _scalar_names(f) | {p.name for p in f.params}
        self.counter = itertools.count(1)
        return Function(f.name, f.params, self.block(f.body, 0), f.loc)

    def fresh_prefix(self, callee: str) -> str:
        while True:
            prefix = f"_{callee}{next(self.counter)}_"
            if not any(n.startswith(prefix) for n in self.taken):
                return prefix

    def block(self, stmts, depth: int) -> tuple:
        out = []
        for s in stmts:
            if isinstance(s, If):
                out.append(If(s.cond, self.block(s.then, depth), self.block(s.orelse, depth), s.loc))
            elif isinstance(s, While):
                out.append(While(s.cond, self.block(s.body, depth), s.loc))
            elif isinstance(s, For):
                out.append(For(s.var, s.lo, s.hi, self.block(s.body, depth), s.loc))
            elif isinstance(s, CallAssign) and depth < self.max_depth:
                out.extend(self.expand(s, depth))
            else:
                out.append(s)
        return tuple(out)

    def expand(self, call: CallAssign, depth: int) -> tuple:
        callee = self.funcs[call.func]
        result = f"_{callee.name}_ret"
        try:
            body = _returns_to_assign(callee.body, result)
        except _NotInlinable as exc:
            self.notes.append(f"call to {callee.name!r} at {call.loc} not inlined: {exc}")
            return (call,)
        prefix = self.fresh_prefix(callee.name)
        scalars = {n: prefix + n for n in _scalar_names(callee) | {result}}
        arrays = {}
        pre = []
        for p, a in zip(callee.params, call.args):
            if p.is_array:
                arrays[p.name] = a.name
            else:
                pre.append(Assign(scalars[p.name], a, call.loc))
        self.taken |= set(scalars.values())
        renamed = _rename_block(body, scalars, arrays)
        expanded = tuple(pre) + renamed + (Assign(call.target, Var(scalars[result]), call.loc),)
        return self.block(expanded, depth + 1)


# -- driver -------------------------------------------------------------------


def _apply(name: str, program: Program, config: OptConfig, notes: list) -> Program:
    if name == INLINE:
        inliner = _Inliner(program, config.max_depth, notes)
        return Program(tuple(inliner.run(f) for f in program.functions), program.entry)
    if name == FOLD:
        fn = constant_fold
    elif name == PROPAGATE:
        fn = constant_propagate
    elif name == DCE:
        fn = dead_code_eliminate
    else:
        fn = lambda f: unroll_concrete_loops(f, config.max_body_copies, notes)  # noqa: E731
    return Program(tuple(fn(f) for f in program.functions), program.entry)


def run_passes(program: Program, config: OptConfig = OptConfig()) -> OptResult:
    """Apply the pipeline repeatedly until a round leaves the program unchanged.

    The trace has one entry per pass application in the first round, plus
    one per pass in every later round that changed the program.
    """
    result = OptResult(program)
    if not config.passes:
        return result
    current = program
    for round_no in range(MAX_ROUNDS):
        entries = []
        notes: list = []
        start = current
        for name in config.passes:
            before = node_count(current)
            current = _apply(name, current, config, notes)
            entries.append((name, before, node_count(current)))
        changed = current != start
        if round_no == 0 or changed:
            result.trace.extend(entries)
        result.rounds = round_no + 1
        result.notes = notes
        if not changed:
            break
    else:
        result.notes.append(f"optimizer stopped after {MAX_ROUNDS} rounds without reaching a fixpoint")
    result.program = current
    return result


def optimize(program: Program, config: OptConfig = OptConfig()) -> Program:
    """Optimized copy of ``program``; the input must validate cleanly."""
    return run_passes(program, config).program


def pass_trace(program: Program, config: OptConfig = OptConfig()) -> list:
    """(pass name, IR size before, IR size after) for one application of
    each configured pass, in order. ``run_passes`` keeps the full trace of
    the later fixpoint rounds too."""
    return run_passes(program, config).trace[: len(config.passes)]
