"""MiniC lexer, recursive-descent parser and static validator.

Grammar (EBNF)::

    program   = { function } [ "entry" IDENT ";" ] ;
    function  = "fn" IDENT "(" [ param { "," param } ] ")" block ;
    param     = IDENT [ "[" INT "]" ] ;
    block     = "{" { stmt } "}" ;
    stmt      = IDENT "=" IDENT "(" [ expr { "," expr } ] ")" ";"
              | IDENT "=" expr ";"
              | IDENT "[" expr "]" "=" expr ";"
              | "if" "(" expr ")" block [ "else" ( block | if-stmt ) ]
              | "while" "(" expr ")" block
              | "for" IDENT "in" expr ".." expr block
              | "return" expr ";" ;
    expr      = or ;
    or        = and { "||" and } ;
    and       = rel { "&&" rel } ;
    rel       = add { ( "<" | "<=" | ">" | ">=" | "==" | "!=" ) add } ;
    add       = mul { ( "+" | "-" ) mul } ;
    mul       = unary { ( "*" | "/" | "%" ) unary } ;
    unary     = "-" INT | ( "-" | "!" ) unary | primary ;
    primary   = INT | IDENT | IDENT "[" expr "]" | "(" expr ")" ;

``//`` starts a line comment. The entry function defaults to the last one
defined.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .ir import (
    INT_MAX,
    Assign,
    Binary,
    CallAssign,
    Const,
    Expr,
    For,
    Function,
    If,
    Load,
    Loc,
    Param,
    Program,
    Return,
    Store,
    Unary,
    Var,
    While,
    always_returns,
    walk,
    walk_block,
)

KEYWORDS = {"fn", "if", "else", "while", "for", "in", "return", "entry"}


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str  # "int", "ident", "kw", "op", "eof"
    text: str
    line: int
    col: int

    @property
    def loc(self) -> Loc:
        return Loc(self.line, self.col)


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<int>[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\.\.|<=|>=|==|!=|&&|\|\||[-+*/%<>=!(){}\[\],;])
    """,
    re.VERBOSE,
)


def tokenize(source: str) -> list:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "ident":
            tokens.append(Token("kw" if text in KEYWORDS else "ident", text, line, col))
        elif kind in ("int", "op"):
            tokens.append(Token(kind, text, line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


_REL = ("<", "<=", ">", ">=", "==", "!=")


class Parser:
    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.pos = 0

    # -- token helpers --

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.pos + k, len(self.tokens) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("op", "kw") and t.text == text

    def advance(self) -> Token:
        t = self.tok
        self.pos += 1
        return t

    def error(self, expected: str) -> ParseError:
        t = self.tok
        found = "end of input" if t.kind == "eof" else repr(t.text)
        return ParseError(f"expected {expected}, found {found}", t.line, t.col)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(repr(text))
        return self.advance()

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            raise self.error("identifier")
        return self.advance()

    def integer(self, negative: bool = False) -> int:
        if self.tok.kind != "int":
            raise self.error("integer literal")
        t = self.advance()
        value = -int(t.text) if negative else int(t.text)
        if not (-(1 << 63) <= value <= INT_MAX):
            raise ParseError(f"integer literal {value} out of 64-bit range", t.line, t.col)
        return value

    # -- declarations --

    def program(self) -> Program:
        funcs = []
        entry = None
        while self.tok.kind != "eof":
            if self.at("entry"):
                self.advance()
                entry = self.ident().text
                self.expect(";")
                if self.tok.kind != "eof":
                    raise self.error("end of input after entry declaration")
                break
            funcs.append(self.function())
        if not funcs:
            raise self.error("'fn'")
        if entry is None:
            entry = funcs[-1].name
        return Program(tuple(funcs), entry)

    def function(self) -> Function:
        start = self.expect("fn")
        name = self.ident().text
        self.expect("(")
        params = []
        if not self.at(")"):
            params.append(self.param())
            while self.at(","):
                self.advance()
                params.append(self.param())
        self.expect(")")
        body = self.block()
        return Function(name, tuple(params), body, start.loc)

    def param(self) -> Param:
        t = self.ident()
        length = None
        if self.at("["):
            self.advance()
            lt = self.tok
            length = self.integer()
            if length < 1:
                raise ParseError("array length must be positive", lt.line, lt.col)
            self.expect("]")
        return Param(t.text, length, t.loc)

    def block(self) -> tuple:
        self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise self.error("'}'")
            stmts.append(self.statement())
        self.advance()
        return tuple(stmts)

    # -- statements --

    def statement(self):
        t = self.tok
        if self.at("if"):
            return self.if_stmt()
        if self.at("while"):
            self.advance()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            return While(cond, self.block(), t.loc)
        if self.at("for"):
            self.advance()
            var = self.ident().text
            self.expect("in")
            lo = self.expr()
            self.expect("..")
            hi = self.expr()
            return For(var, lo, hi, self.block(), t.loc)
        if self.at("return"):
            self.advance()
            value = self.expr()
            self.expect(";")
            return Return(value, t.loc)
        if t.kind == "ident":
            name = self.advance().text
            if self.at("["):
                self.advance()
                index = self.expr()
                self.expect("]")
                self.expect("=")
                value = self.expr()
                self.expect(";")
                return Store(name, index, value, t.loc)
            self.expect("=")
            if self.tok.kind == "ident" and self.peek().kind == "op" and self.peek().text == "(":
                func = self.advance().text
                self.advance()
                args = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.at(","):
                        self.advance()
                        args.append(self.expr())
                self.expect(")")
                self.expect(";")
                return CallAssign(name, func, tuple(args), t.loc)
            value = self.expr()
            self.expect(";")
            return Assign(name, value, t.loc)
        raise self.error("statement")

    def if_stmt(self) -> If:
        t = self.expect("if")
        self.expect("(")
        cond = self.expr()
        self.expect(")")
        then = self.block()
        orelse: tuple = ()
        if self.at("else"):
            self.advance()
            orelse = (self.if_stmt(),) if self.at("if") else self.block()
        return If(cond, then, orelse, t.loc)

    # -- expressions --

    def expr(self) -> Expr:
        return self._binary_level(0)

    _LEVELS = (("||",), ("&&",), _REL, ("+", "-"), ("*", "/", "%"))

    def _binary_level(self, level: int) -> Expr:
        if level == len(self._LEVELS):
            return self.unary()
        left = self._binary_level(level + 1)
        ops = self._LEVELS[level]
        while self.tok.kind == "op" and self.tok.text in ops:
            op = self.advance()
            right = self._binary_level(level + 1)
            left = Binary(op.text, left, right, op.loc)
        return left

    def unary(self) -> Expr:
        t = self.tok
        if self.at("-"):
            self.advance()
            if self.tok.kind == "int":
                return Const(self.integer(negative=True), t.loc)
            return Unary("-", self.unary(), t.loc)
        if self.at("!"):
            self.advance()
            return Unary("!", self.unary(), t.loc)
        return self.primary()

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "int":
            return Const(self.integer(), t.loc)
        if t.kind == "ident":
            self.advance()
            if self.at("["):
                self.advance()
                index = self.expr()
                self.expect("]")
                return Load(t.text, index, t.loc)
            return Var(t.text, t.loc)
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        raise self.error("expression")


def parse_program(source: str) -> Program:
    """Parse MiniC source into a Program. Raises ParseError."""
    return Parser(source).program()


def parse_expr(source: str) -> Expr:
    p = Parser(source)
    e = p.expr()
    if p.tok.kind != "eof":
        raise p.error("end of expression")
    return e


# -- validation --------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    category: str
    message: str
    function: str
    loc: Optional[Loc] = None

    def __str__(self) -> str:
        where = f"{self.loc}: " if self.loc else ""
        return f"{where}{self.category}: {self.message} (in {self.function})"


class _Unreachable:
    """Marker for the definite-assignment set after a return."""


_ALL = _Unreachable()


def _callees(f: Function) -> set:
    return {n.func for n in walk_block(f.body) if isinstance(n, CallAssign)}


def validate(program: Program) -> list:
    """Static checks. Returns a list of Diagnostic, empty iff the program is
    well formed."""
    diags: list = []
    names = [f.name for f in program.functions]
    seen = set()
    for f in program.functions:
        if f.name in seen:
            diags.append(Diagnostic("duplicate-name", f"function {f.name!r} defined twice", f.name, f.loc))
        seen.add(f.name)
    if program.entry not in names:
        diags.append(Diagnostic("unknown-callee", f"entry function {program.entry!r} is not defined", program.entry))
    funcs = {f.name: f for f in program.functions}
    for f in program.functions:
        _check_function(f, funcs, diags)
    _check_recursion(program, funcs, diags)
    return diags


def _check_function(f: Function, funcs: dict, diags: list) -> None:
    scalars, arrays = set(), {}
    for p in f.params:
        if p.name in scalars or p.name in arrays:
            diags.append(Diagnostic("duplicate-name", f"parameter {p.name!r} declared twice", f.name, p.loc))
        if p.is_array:
            arrays[p.name] = p.length
        else:
            scalars.add(p.name)

    if not always_returns(f.body):
        diags.append(Diagnostic("missing-return", "control can reach the end of the function", f.name, f.loc))

    for n in walk_block(f.body):
        if isinstance(n, Load) and n.array not in arrays:
            diags.append(Diagnostic("misuse", f"{n.array!r} is not an array parameter", f.name, n.loc))
        elif isinstance(n, Store) and n.array not in arrays:
            diags.append(Diagnostic("misuse", f"{n.array!r} is not an array parameter", f.name, n.loc))
        elif isinstance(n, (Assign, CallAssign)) and n.target in arrays:
            diags.append(Diagnostic("misuse", f"cannot assign to array {n.target!r}", f.name, n.loc))
        elif isinstance(n, For) and n.var in arrays:
            diags.append(Diagnostic("misuse", f"cannot use array {n.var!r} as loop variable", f.name, n.loc))
        if isinstance(n, CallAssign):
            _check_call(f, n, funcs, arrays, diags)

    _definite_assignment(f, f.body, set(scalars), arrays, diags)


def _check_call(f, call: CallAssign, funcs, arrays, diags) -> None:
    callee = funcs.get(call.func)
    if callee is None:
        diags.append(Diagnostic("unknown-callee", f"call to undefined function {call.func!r}", f.name, call.loc))
        return
    if len(callee.params) != len(call.args):
        diags.append(Diagnostic(
            "bad-call", f"{call.func!r} takes {len(callee.params)} arguments, got {len(call.args)}", f.name, call.loc))
        return
    for p, a in zip(callee.params, call.args):
        if p.is_array:
            if not (isinstance(a, Var) and a.name in arrays):
                diags.append(Diagnostic("bad-call", f"argument for {p.name!r} must be an array name", f.name, call.loc))
            elif arrays[a.name] != p.length:
                diags.append(Diagnostic(
                    "bad-call", f"array {a.name!r} has length {arrays[a.name]}, {p.name!r} expects {p.length}",
                    f.name, call.loc))


def _check_reads(f, e: Expr, assigned, arrays, diags) -> None:
    if assigned is _ALL:
        return
    for n in walk(e):
        if isinstance(n, Var):
            if n.name in arrays:
                # array names only appear bare as call arguments
                continue
            if n.name not in assigned:
                diags.append(Diagnostic("undefined-variable", f"{n.name!r} may be used before assignment", f.name, n.loc))


def _definite_assignment(f, stmts, assigned, arrays, diags):
    for s in stmts:
        if assigned is _ALL:
            return _ALL
        if isinstance(s, Assign):
            _check_reads(f, s.value, assigned, arrays, diags)
            assigned = assigned | {s.target}
        elif isinstance(s, CallAssign):
            for a in s.args:
                _check_reads(f, a, assigned, arrays, diags)
            assigned = assigned | {s.target}
        elif isinstance(s, Store):
            _check_reads(f, s.index, assigned, arrays, diags)
            _check_reads(f, s.value, assigned, arrays, diags)
        elif isinstance(s, Return):
            _check_reads(f, s.value, assigned, arrays, diags)
            return _ALL
        elif isinstance(s, If):
            _check_reads(f, s.cond, assigned, arrays, diags)
            a1 = _definite_assignment(f, s.then, assigned, arrays, diags)
            a2 = _definite_assignment(f, s.orelse, assigned, arrays, diags)
            if a1 is _ALL:
                assigned = a2
            elif a2 is _ALL:
                assigned = a1
            else:
                assigned = a1 & a2
        elif isinstance(s, While):
            _check_reads(f, s.cond, assigned, arrays, diags)
            _definite_assignment(f, s.body, assigned, arrays, diags)
        elif isinstance(s, For):
            _check_reads(f, s.lo, assigned, arrays, diags)
            _check_reads(f, s.hi, assigned, arrays, diags)
            _definite_assignment(f, s.body, assigned | {s.var}, arrays, diags)
    return assigned


def _check_recursion(program: Program, funcs: dict, diags: list) -> None:
    state: dict = {}

    def visit(name, stack):
        state[name] = "active"
        for callee in sorted(_callees(funcs[name])):
            if callee not in funcs:
                continue
            if state.get(callee) == "active":
                diags.append(Diagnostic("recursion", f"recursive call cycle through {callee!r}", name, funcs[name].loc))
            elif callee not in state:
                visit(callee, stack + [callee])
        state[name] = "done"

    for f in program.functions:
        if f.name not in state and f.name in funcs:
            visit(f.name, [f.name])
