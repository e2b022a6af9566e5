"""Forking symbolic executor with deterministic cost counters.

Functions are compiled to a small jump-based instruction list and explored
depth-first, true side first. Every decision on a symbolic value (branch
truth, comparison, ``!``, ``&&``/``||`` operands, zero divisors, symbolic
array indices) is a binary fork: the solver is queried once for each side
and infeasible sides are counted, so

    paths_completed + paths_infeasible + paths_truncated == forks + 1.

The path condition is kept as per-variable domains (narrowed by unary
atoms such as ``n < 3``) plus a list of residual atoms; each query only
carries the residual atoms that share variables with the new atom.

Symbolic terms use unbounded integer arithmetic; only concrete values wrap
to 64 bits.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Optional

from .interp import Trap, arith, wrap
from .ir import (
    Assign,
    Binary,
    CallAssign,
    Const,
    For,
    If,
    Load,
    Program,
    Return,
    Store,
    Unary,
    Var,
    While,
)
from .solver import Atom, BudgetExceeded, decide, interval
from .symbols import SymbolSpec


@dataclass(frozen=True)
class Limits:
    max_paths: int = 10**5
    max_depth: int = 10**4
    max_loop_iterations: int = 256
    split_cap: int = 10**6

    def __post_init__(self):
        for name, v in asdict(self).items():
            if v < 1:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class CostWeights:
    instruction: int = 1
    memory_access: int = 10
    fork: int = 50
    propagation_step: int = 1


@dataclass
class PathStats:
    paths_completed: int = 0
    paths_infeasible: int = 0
    paths_truncated: int = 0
    forks: int = 0
    queries: int = 0
    propagation_steps_total: int = 0
    instructions_executed: int = 0
    memory_accesses: int = 0
    arithmetic_ops: int = 0
    traps: int = 0  # completed paths that ended in a trap


@dataclass
class CostReport:
    wall_time_ns: int
    deterministic_cost: int
    stats: PathStats
    notes: list = field(default_factory=list)

    @property
    def truncated(self) -> bool:
        return self.stats.paths_truncated > 0


def deterministic_cost(stats: PathStats, weights: CostWeights = CostWeights()) -> int:
    return (weights.instruction * stats.instructions_executed
            + weights.memory_access * stats.memory_accesses
            + weights.fork * stats.forks
            + weights.propagation_step * stats.propagation_steps_total)


# -- compilation ----------------------------------------------------------------


class _Compiler:
    def __init__(self, fname: str):
        self.fname = fname
        self.code: list = []
        self.loops = 0

    def emit(self, *ins) -> int:
        self.code.append(list(ins))
        return len(self.code) - 1

    def block(self, stmts) -> None:
        for s in stmts:
            if isinstance(s, Assign):
                self.emit("assign", s.target, s.value)
            elif isinstance(s, Store):
                self.emit("store", s)
            elif isinstance(s, Return):
                self.emit("return", s.value)
            elif isinstance(s, CallAssign):
                self.emit("call", s)
            elif isinstance(s, If):
                br = self.emit("branch", s.cond, None)
                self.block(s.then)
                if s.orelse:
                    j = self.emit("jump", None)
                    self.code[br][2] = len(self.code)
                    self.block(s.orelse)
                    self.code[j][1] = len(self.code)
                else:
                    self.code[br][2] = len(self.code)
            elif isinstance(s, While):
                lid = (self.fname, self.loops)
                self.loops += 1
                self.emit("loop_enter", lid)
                test = self.emit("loop_test", s.cond, None, lid)
                self.block(s.body)
                self.emit("jump", test)
                self.code[test][2] = len(self.code)
            elif isinstance(s, For):
                lid = (self.fname, self.loops)
                self.loops += 1
                counter, bound = f"%c{self.loops}", f"%h{self.loops}"
                self.emit("for_init", counter, bound, s.lo, s.hi, lid)
                test = self.emit("for_test", s.var, counter, bound, None, lid, s)
                self.block(s.body)
                self.emit("for_step", counter, test)
                self.code[test][4] = len(self.code)
            else:
                raise TypeError(f"not a statement: {s!r}")


def compile_function(f) -> list:
    c = _Compiler(f.name)
    c.block(f.body)
    c.emit("fallthrough")
    return [tuple(i) for i in c.code]


# -- state ----------------------------------------------------------------------


class _Frame:
    __slots__ = ("func", "pc", "env", "arrays", "target", "iters")

    def __init__(self, func, pc, env, arrays, target, iters):
        self.func = func
        self.pc = pc
        self.env = env
        self.arrays = arrays
        self.target = target
        self.iters = iters


class _State:
    __slots__ = ("frames", "domains", "atoms", "depth")

    def __init__(self, frames, domains, atoms, depth):
        self.frames = frames
        self.domains = domains
        self.atoms = atoms
        self.depth = depth

    @property
    def top(self) -> _Frame:
        return self.frames[-1]

    def clone(self) -> "_State":
        copies: dict = {}
        frames = []
        for fr in self.frames:
            arrays = {}
            for name, arr in fr.arrays.items():
                key = id(arr)
                if key not in copies:
                    copies[key] = list(arr)
                arrays[name] = copies[key]
            frames.append(_Frame(fr.func, fr.pc, dict(fr.env), arrays, fr.target, dict(fr.iters)))
        return _State(frames, dict(self.domains), self.atoms, self.depth)


class _TrapValue:
    __slots__ = ("trap",)

    def __init__(self, trap: Trap):
        self.trap = trap


def _expr(v):
    return Const(v) if isinstance(v, int) else v


def _sym_binary(op: str, a, b):
    if isinstance(a, int) and isinstance(b, int):
        return arith(op, a, b)
    if op == "+":
        if b == 0:
            return a
        if a == 0:
            return b
    elif op == "-":
        if b == 0:
            return a
    elif op == "*":
        if a == 0 or b == 0:
            return 0
        if b == 1:
            return a
        if a == 1:
            return b
    return Binary(op, _expr(a), _expr(b))


def _sym_neg(v):
    if isinstance(v, int):
        return wrap(-v)
    if isinstance(v, Unary) and v.op == "-":
        return v.operand
    return Unary("-", v)


# -- executor -------------------------------------------------------------------


class SymbolicExecutor:
    def __init__(self, program: Program, spec: SymbolSpec, limits: Limits = Limits(),
                 weights: CostWeights = CostWeights()):
        self.program = program
        self.spec = spec
        self.limits = limits
        self.weights = weights
        self.code = {f.name: compile_function(f) for f in program.functions}
        self.funcs = {f.name: f for f in program.functions}
        self.stats = PathStats()
        self.notes: list = []
        self.order: dict = {}

    # -- path condition --

    def _add_atom(self, st: _State, atom: Atom) -> None:
        lhs, op, rhs = atom.lhs, atom.op, atom.rhs
        var = const = None
        if isinstance(lhs, Var) and isinstance(rhs, Const):
            var, const, side = lhs.name, rhs.value, "l"
        elif isinstance(rhs, Var) and isinstance(lhs, Const):
            var, const, side = rhs.name, lhs.value, "r"
        if var is not None:
            lo, hi = st.domains[var]
            if op == "==":
                lo = hi = const
            elif op == "<":
                if side == "l":
                    hi = min(hi, const - 1)
                else:
                    lo = max(lo, const + 1)
            elif op == "<=":
                if side == "l":
                    hi = min(hi, const)
                else:
                    lo = max(lo, const)
            elif const == lo:
                lo += 1
            elif const == hi:
                hi -= 1
            else:
                var = None
            if var is not None:
                st.domains[var] = (lo, hi)
                return
        if atom not in st.atoms:
            st.atoms = st.atoms + (atom,)

    def _feasible(self, st: _State, atom: Atom) -> bool:
        vars_ = set(atom.variables())
        chosen = [atom]
        pending = list(st.atoms)
        grew = True
        while grew:
            grew = False
            rest = []
            for a in pending:
                av = a.variables()
                if av & vars_:
                    chosen.append(a)
                    vars_ |= av
                    grew = True
                else:
                    rest.append(a)
            pending = rest
        domains = {v: st.domains[v] for v in sorted(vars_, key=self.order.__getitem__)}
        self.stats.queries += 1
        r = decide(chosen, domains, split_cap=self.limits.split_cap)
        self.stats.propagation_steps_total += r.propagation_steps
        return r.sat

    def _decide(self, st: _State, atom: Atom) -> list:
        """Fork on ``atom``; returns [(state, outcome)] for feasible sides,
        true side first."""
        if st.depth >= self.limits.max_depth:
            self.stats.paths_truncated += 1
            self.notes.append("max_depth reached")
            return []
        try:
            t_ok = self._feasible(st, atom)
            f_ok = self._feasible(st, atom.negate())
        except BudgetExceeded as exc:
            self.stats.paths_truncated += 1
            self.notes.append(f"solver: {exc}")
            return []
        self.stats.forks += 1
        self.stats.paths_infeasible += (not t_ok) + (not f_ok)
        st.depth += 1
        out = []
        if t_ok:
            s = st.clone() if f_ok else st
            self._add_atom(s, atom)
            out.append((s, True))
        if f_ok:
            self._add_atom(st, atom.negate())
            out.append((st, False))
        return out

    def _truth(self, st: _State, v) -> list:
        if isinstance(v, int):
            return [(st, v != 0)]
        return self._decide(st, Atom(v, "!=", Const(0)))

    # -- expressions --

    def _eval(self, st: _State, e) -> list:
        stats = self.stats
        stats.instructions_executed += 1
        if isinstance(e, Const):
            return [(st, e.value)]
        if isinstance(e, Var):
            return [(st, st.top.env[e.name])]
        if isinstance(e, Load):
            out = []
            for s, idx in self._eval(st, e.index):
                if isinstance(idx, _TrapValue):
                    out.append((s, idx))
                    continue
                for s2, j in self._index(s, idx, e.array, e):
                    if isinstance(j, _TrapValue):
                        out.append((s2, j))
                    else:
                        stats.memory_accesses += 1
                        out.append((s2, s2.top.arrays[e.array][j]))
            return out
        if isinstance(e, Unary):
            out = []
            for s, v in self._eval(st, e.operand):
                if isinstance(v, _TrapValue):
                    out.append((s, v))
                elif e.op == "-":
                    stats.arithmetic_ops += 1
                    out.append((s, _sym_neg(v)))
                else:
                    out.extend((s2, int(not t)) for s2, t in self._truth(s, v))
            return out
        op = e.op
        if op in ("&&", "||"):
            out = []
            for s, a in self._eval(st, e.left):
                if isinstance(a, _TrapValue):
                    out.append((s, a))
                    continue
                for s2, ta in self._truth(s, a):
                    if ta == (op == "||"):
                        out.append((s2, int(ta)))
                        continue
                    for s3, b in self._eval(s2, e.right):
                        if isinstance(b, _TrapValue):
                            out.append((s3, b))
                        else:
                            out.extend((s4, int(tb)) for s4, tb in self._truth(s3, b))
            return out
        out = []
        for s, a in self._eval(st, e.left):
            if isinstance(a, _TrapValue):
                out.append((s, a))
                continue
            for s2, b in self._eval(s, e.right):
                if isinstance(b, _TrapValue):
                    out.append((s2, b))
                    continue
                out.extend(self._binary(s2, e, a, b))
        return out

    def _binary(self, st: _State, e: Binary, a, b) -> list:
        op = e.op
        if op in ("<", "<=", ">", ">=", "==", "!="):
            if isinstance(a, int) and isinstance(b, int):
                return [(st, arith(op, a, b))]
            return [(s, int(t)) for s, t in self._decide(st, Atom.make(_expr(a), op, _expr(b)))]
        self.stats.arithmetic_ops += 1
        if op in ("/", "%"):
            trap = _TrapValue(Trap("divide-by-zero", e.loc, st.top.func))
            if isinstance(b, int):
                if b == 0:
                    return [(st, trap)]
                return [(st, _sym_binary(op, a, b))]
            out = []
            for s, is_zero in self._decide(st, Atom(b, "==", Const(0))):
                out.append((s, trap if is_zero else _sym_binary(op, a, b)))
            return out
        return [(st, _sym_binary(op, a, b))]

    def _index(self, st: _State, idx, array: str, node) -> list:
        """Resolve an index to concrete positions, case-splitting symbolic ones."""
        length = len(st.top.arrays[array])
        oob = _TrapValue(Trap("out-of-bounds", node.loc, st.top.func))
        if isinstance(idx, int):
            return [(st, idx if 0 <= idx < length else oob)]
        lo, hi = interval(idx, st.domains)
        candidates = list(range(max(0, lo), min(length - 1, hi) + 1))
        may_oob = lo < 0 or hi > length - 1
        out = []
        cur: Optional[_State] = st
        for k, j in enumerate(candidates):
            if k == len(candidates) - 1 and not may_oob:
                self._add_atom(cur, Atom(idx, "==", Const(j)))
                out.append((cur, j))
                cur = None
                break
            nxt = None
            for s, hit in self._decide(cur, Atom(idx, "==", Const(j))):
                if hit:
                    out.append((s, j))
                else:
                    nxt = s
            cur = nxt
            if cur is None:
                break
        if cur is not None:
            out.append((cur, oob))
        return out

    # -- statements --

    def _step(self, st: _State) -> list:
        """Execute one instruction of the top frame; returns successor states.

        Terminated paths are accounted here and produce no successor.
        """
        fr = st.top
        ins = self.code[fr.func][fr.pc]
        kind = ins[0]
        self.stats.instructions_executed += 1
        nxt = []
        if kind == "assign":
            for s, v in self._eval(st, ins[2]):
                if self._trapped(v):
                    continue
                s.top.env[ins[1]] = v
                s.top.pc += 1
                nxt.append(s)
        elif kind == "store":
            node = ins[1]
            for s, idx in self._eval(st, node.index):
                if self._trapped(idx):
                    continue
                for s2, j in self._index(s, idx, node.array, node):
                    if self._trapped(j):
                        continue
                    for s3, v in self._eval(s2, node.value):
                        if self._trapped(v):
                            continue
                        self.stats.memory_accesses += 1
                        s3.top.arrays[node.array][j] = v
                        s3.top.pc += 1
                        nxt.append(s3)
        elif kind == "branch":
            for s, v in self._eval(st, ins[1]):
                if self._trapped(v):
                    continue
                for s2, t in self._truth(s, v):
                    s2.top.pc = s2.top.pc + 1 if t else ins[2]
                    nxt.append(s2)
        elif kind == "jump":
            fr.pc = ins[1]
            nxt.append(st)
        elif kind == "loop_enter":
            fr.iters[ins[1]] = 0
            fr.pc += 1
            nxt.append(st)
        elif kind == "loop_test":
            lid = ins[3]
            for s, v in self._eval(st, ins[1]):
                if self._trapped(v):
                    continue
                for s2, t in self._truth(s, v):
                    f2 = s2.top
                    if t:
                        f2.iters[lid] += 1
                        if f2.iters[lid] > self.limits.max_loop_iterations:
                            self.stats.paths_truncated += 1
                            continue
                        f2.pc += 1
                    else:
                        f2.pc = ins[2]
                    nxt.append(s2)
        elif kind == "for_init":
            _, counter, bound, lo_e, hi_e, lid = ins
            for s, lo in self._eval(st, lo_e):
                if self._trapped(lo):
                    continue
                for s2, hi in self._eval(s, hi_e):
                    if self._trapped(hi):
                        continue
                    f2 = s2.top
                    f2.env[counter] = lo
                    f2.env[bound] = hi
                    f2.iters[lid] = 0
                    f2.pc += 1
                    nxt.append(s2)
        elif kind == "for_test":
            _, var, counter, bound, exit_pc, lid, node = ins
            c, h = fr.env[counter], fr.env[bound]
            if isinstance(c, int) and isinstance(h, int):
                branches = [(st, c < h)]
            else:
                branches = self._decide(st, Atom(_expr(c), "<", _expr(h)))
            for s, t in branches:
                f2 = s.top
                if t:
                    f2.iters[lid] += 1
                    if f2.iters[lid] > self.limits.max_loop_iterations:
                        self.stats.paths_truncated += 1
                        continue
                    f2.env[var] = f2.env[counter]
                    f2.pc += 1
                else:
                    f2.pc = exit_pc
                nxt.append(s)
        elif kind == "for_step":
            c = fr.env[ins[1]]
            fr.env[ins[1]] = wrap(c + 1) if isinstance(c, int) else _sym_binary("+", c, 1)
            fr.pc = ins[2]
            nxt.append(st)
        elif kind == "return":
            for s, v in self._eval(st, ins[1]):
                if self._trapped(v):
                    continue
                done = s.frames.pop()
                if not s.frames:
                    self.stats.paths_completed += 1
                    continue
                s.top.env[done.target] = v
                s.top.pc += 1
                nxt.append(s)
        elif kind == "call":
            node = ins[1]
            callee = self.funcs[node.func]
            partial = [(st, [])]
            for p, a in zip(callee.params, node.args):
                grown = []
                for s, vals in partial:
                    if p.is_array:
                        grown.append((s, vals + [a.name]))
                        continue
                    for s2, v in self._eval(s, a):
                        if not self._trapped(v):
                            grown.append((s2, vals + [v]))
                partial = grown
            for s, vals in partial:
                env, arrays = {}, {}
                for p, v in zip(callee.params, vals):
                    if p.is_array:
                        arrays[p.name] = s.top.arrays[v]
                    else:
                        env[p.name] = v
                s.frames.append(_Frame(callee.name, 0, env, arrays, node.target, {}))
                nxt.append(s)
        elif kind == "fallthrough":
            raise RuntimeError(f"function {fr.func!r} ended without return")
        else:
            raise RuntimeError(f"bad instruction {ins!r}")
        return nxt

    def _trapped(self, v) -> bool:
        if isinstance(v, _TrapValue):
            self.stats.paths_completed += 1
            self.stats.traps += 1
            return True
        return False

    def _initial_state(self) -> _State:
        f = self.program.entry_function
        self.spec.check(f)
        env, arrays, domains = {}, {}, {}
        for p in f.params:
            ps = self.spec[p.name]
            if p.is_array:
                if ps.symbolic:
                    names = [f"{p.name}[{i}]" for i in range(p.length)]
                    for n in names:
                        domains[n] = (ps.lo, ps.hi)
                    arrays[p.name] = [Var(n) for n in names]
                else:
                    arrays[p.name] = [wrap(v) for v in ps.values]
            elif ps.symbolic:
                domains[p.name] = (ps.lo, ps.hi)
                env[p.name] = Var(p.name)
            else:
                env[p.name] = wrap(ps.value)
        self.order = {v: i for i, v in enumerate(domains)}
        return _State([_Frame(f.name, 0, env, arrays, None, {})], domains, (), 0)

    def run(self) -> CostReport:
        t0 = time.perf_counter_ns()
        stack = [self._initial_state()]
        while stack:
            if self.stats.paths_completed >= self.limits.max_paths:
                self.stats.paths_truncated += len(stack)
                self.notes.append(f"max_paths={self.limits.max_paths} reached")
                break
            st = stack.pop()
            while True:
                succ = self._step(st)
                if len(succ) == 1:
                    st = succ[0]
                    continue
                stack.extend(reversed(succ))
                break
        wall = time.perf_counter_ns() - t0
        notes = list(dict.fromkeys(self.notes))
        return CostReport(wall, deterministic_cost(self.stats, self.weights), self.stats, notes)


def execute(program: Program, spec: SymbolSpec, limits: Limits = Limits(),
            weights: CostWeights = CostWeights()) -> CostReport:
    """Explore every path of the entry function under ``spec``.

    Never raises on resource limits: truncated paths are counted in
    ``stats.paths_truncated``. Paths that trap (divide-by-zero or an
    out-of-bounds index) count as completed and also in ``stats.traps``.
    """
    return SymbolicExecutor(program, spec, limits, weights).run()
