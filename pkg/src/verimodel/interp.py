"""Concrete big-step interpreter and the shared 64-bit integer arithmetic.

The interpreter walks the IR directly (it does not share code with the
symbolic executor) so it can serve as an oracle for the optimizer and for
path enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass
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
    Program,
    Return,
    Store,
    Unary,
    Var,
    While,
)

_MASK = (1 << 64) - 1


def wrap(v: int) -> int:
    """Two's-complement wrap to a signed 64-bit integer."""
    v &= _MASK
    return v - (1 << 64) if v >> 63 else v


def c_div(a: int, b: int) -> int:
    """Division truncating toward zero (C semantics); ``b`` must be nonzero."""
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def c_mod(a: int, b: int) -> int:
    """Remainder with the sign of the dividend (C semantics)."""
    return a - b * c_div(a, b)


def arith(op: str, a: int, b: int) -> int:
    """Concrete binary arithmetic/relational/logical operator on int64 values.

    Division and remainder by zero must be screened by the caller.
    """
    if op == "+":
        return wrap(a + b)
    if op == "-":
        return wrap(a - b)
    if op == "*":
        return wrap(a * b)
    if op == "/":
        return wrap(c_div(a, b))
    if op == "%":
        return wrap(c_mod(a, b))
    if op == "<":
        return int(a < b)
    if op == "<=":
        return int(a <= b)
    if op == ">":
        return int(a > b)
    if op == ">=":
        return int(a >= b)
    if op == "==":
        return int(a == b)
    if op == "!=":
        return int(a != b)
    if op == "&&":
        return int(bool(a) and bool(b))
    if op == "||":
        return int(bool(a) or bool(b))
    raise ValueError(f"unknown operator {op!r}")


@dataclass(frozen=True)
class Trap:
    kind: str  # "divide-by-zero" | "out-of-bounds"
    loc: Optional[Loc] = None
    function: str = ""


class TrapSignal(Exception):
    def __init__(self, trap: Trap):
        super().__init__(trap.kind)
        self.trap = trap


class FuelExhausted(RuntimeError):
    pass


class _ReturnSignal(Exception):
    def __init__(self, value: int):
        self.value = value


class _Machine:
    def __init__(self, program: Program, fuel: int, trace: Optional[list]):
        self.program = program
        self.fuel = fuel
        self.trace = trace

    def tick(self):
        self.fuel -= 1
        if self.fuel < 0:
            raise FuelExhausted("interpreter step budget exhausted")

    def note(self, event):
        if self.trace is not None:
            self.trace.append(event)

    def call(self, f: Function, args: list):
        env, arrays = {}, {}
        for p, a in zip(f.params, args):
            if p.is_array:
                arrays[p.name] = a
            else:
                env[p.name] = a
        try:
            self.block(f, f.body, env, arrays)
        except _ReturnSignal as r:
            return r.value
        raise RuntimeError(f"function {f.name!r} ended without return")

    def truth(self, node, v: int) -> bool:
        self.note((id(node), "t", v != 0))
        return v != 0

    def eval(self, f, e, env, arrays) -> int:
        self.tick()
        if isinstance(e, Const):
            return e.value
        if isinstance(e, Var):
            return env[e.name]
        if isinstance(e, Load):
            idx = self.eval(f, e.index, env, arrays)
            arr = arrays[e.array]
            self.note((id(e), "i", idx if 0 <= idx < len(arr) else "oob"))
            if not 0 <= idx < len(arr):
                raise TrapSignal(Trap("out-of-bounds", e.loc, f.name))
            return arr[idx]
        if isinstance(e, Unary):
            v = self.eval(f, e.operand, env, arrays)
            if e.op == "-":
                return wrap(-v)
            return int(not self.truth(e, v))
        if isinstance(e, Binary):
            if e.op in ("&&", "||"):
                a = self.truth(e.left, self.eval(f, e.left, env, arrays))
                if e.op == "&&" and not a:
                    return 0
                if e.op == "||" and a:
                    return 1
                return int(self.truth(e.right, self.eval(f, e.right, env, arrays)))
            a = self.eval(f, e.left, env, arrays)
            b = self.eval(f, e.right, env, arrays)
            if e.op in ("/", "%"):
                self.note((id(e), "z", b == 0))
                if b == 0:
                    raise TrapSignal(Trap("divide-by-zero", e.loc, f.name))
            r = arith(e.op, a, b)
            if e.op in ("<", "<=", ">", ">=", "==", "!="):
                self.note((id(e), "c", r))
            return r
        raise TypeError(f"not an expression: {e!r}")

    def block(self, f, stmts, env, arrays):
        for s in stmts:
            self.tick()
            if isinstance(s, Assign):
                env[s.target] = self.eval(f, s.value, env, arrays)
            elif isinstance(s, Store):
                idx = self.eval(f, s.index, env, arrays)
                arr = arrays[s.array]
                self.note((id(s), "i", idx if 0 <= idx < len(arr) else "oob"))
                if not 0 <= idx < len(arr):
                    raise TrapSignal(Trap("out-of-bounds", s.loc, f.name))
                arr[idx] = self.eval(f, s.value, env, arrays)
            elif isinstance(s, If):
                if self.truth(s, self.eval(f, s.cond, env, arrays)):
                    self.block(f, s.then, env, arrays)
                else:
                    self.block(f, s.orelse, env, arrays)
            elif isinstance(s, While):
                while self.truth(s, self.eval(f, s.cond, env, arrays)):
                    self.block(f, s.body, env, arrays)
                    self.tick()
            elif isinstance(s, For):
                lo = self.eval(f, s.lo, env, arrays)
                hi = self.eval(f, s.hi, env, arrays)
                k = lo
                while self.truth(s, int(k < hi)):
                    env[s.var] = k
                    self.block(f, s.body, env, arrays)
                    k = wrap(k + 1)
                    self.tick()
            elif isinstance(s, Return):
                raise _ReturnSignal(self.eval(f, s.value, env, arrays))
            elif isinstance(s, CallAssign):
                callee = self.program.function(s.func)
                args = []
                for p, a in zip(callee.params, s.args):
                    args.append(arrays[a.name] if p.is_array else self.eval(f, a, env, arrays))
                env[s.target] = self.call(callee, args)
            else:
                raise TypeError(f"not a statement: {s!r}")


def interpret(program: Program, inputs: dict, *, fuel: int = 10_000_000, trace: Optional[list] = None):
    """Run the entry function on concrete inputs.

    ``inputs`` maps every entry parameter to an int (scalars) or a list of
    ints (arrays). Arrays are copied, so the caller's lists are untouched.
    Returns the int result, or a :class:`Trap` on divide-by-zero or an
    out-of-bounds index. When ``trace`` is a list, every decision taken
    (branch truth values, comparison outcomes, index values, zero-divisor
    checks) is appended to it.
    """
    f = program.entry_function
    args = []
    for p in f.params:
        if p.name not in inputs:
            raise KeyError(f"missing input for parameter {p.name!r}")
        v = inputs[p.name]
        if p.is_array:
            if len(v) != p.length:
                raise ValueError(f"array {p.name!r} needs {p.length} elements, got {len(v)}")
            args.append([wrap(int(x)) for x in v])
        else:
            args.append(wrap(int(v)))
    m = _Machine(program, fuel, trace)
    try:
        return m.call(f, args)
    except TrapSignal as t:
        return t.trap
