"""Symbolic regression by tree-based genetic programming.

Programs are flat prefix lists. A node is a function name (``str``), a
feature index (``int``) or a constant (``float``). Every operator is total:
division returns 1 when the denominator is 0 and the logarithm is taken of
1 + |x|, so evaluation never traps.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dataset import Dataset, EmptyDataset
from .linear import as_points

ARITY = {"add": 2, "sub": 2, "mul": 2, "div": 2, "log": 1}
FUNCTIONS = tuple(ARITY)
PROTECTED_DIV_VALUE = 1.0
CONST_RANGE = (-5.0, 5.0)


@dataclass(frozen=True)
class GPConfig:
    population: int = 500
    generations: int = 100
    tournament_size: int = 5
    p_crossover: float = 0.9
    p_subtree_mutation: float = 0.1
    max_depth: int = 8
    init_depth: tuple = (2, 6)
    parsimony: float = 1e-3
    tuning_steps: int = 100
    stopping_mse: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.population < 2 or self.generations < 0 or self.tournament_size < 1:
            raise ValueError("population >= 2, generations >= 0, tournament_size >= 1 required")
        if self.p_crossover + self.p_subtree_mutation > 1.0 + 1e-12:
            raise ValueError("crossover and mutation probabilities exceed 1")


# -- tree utilities -------------------------------------------------------------


def _is_const(node) -> bool:
    return isinstance(node, float)


def _is_feature(node) -> bool:
    return isinstance(node, int) and not isinstance(node, bool)


def subtree_end(prog: list, start: int) -> int:
    """Index one past the subtree rooted at ``start``."""
    need = 1
    i = start
    while need:
        node = prog[i]
        need += ARITY[node] - 1 if isinstance(node, str) else -1
        i += 1
    return i


def depth(prog: list) -> int:
    best, stack = 0, []
    for node in prog:
        d = stack.pop() + 1 if stack else 1
        best = max(best, d)
        if isinstance(node, str):
            stack.extend([d] * ARITY[node])
    return best


def _protected_div(a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.divide(a, np.where(b == 0, 1.0, b))
    return np.where(b == 0, PROTECTED_DIV_VALUE, q)


def evaluate(prog: list, X: np.ndarray) -> np.ndarray:
    """Vectorized evaluation over the rows of ``X``."""
    n = X.shape[0]
    stack = []
    with np.errstate(over="ignore", invalid="ignore"):
        for node in reversed(prog):
            if _is_const(node):
                stack.append(np.full(n, node))
            elif _is_feature(node):
                stack.append(X[:, node])
            elif node == "log":
                stack.append(np.log1p(np.abs(stack.pop())))
            else:
                a, b = stack.pop(), stack.pop()
                if node == "add":
                    stack.append(a + b)
                elif node == "sub":
                    stack.append(a - b)
                elif node == "mul":
                    stack.append(a * b)
                else:
                    stack.append(_protected_div(a, b))
    return stack[0]


def to_prefix(prog: list, names) -> str:
    """S-expression text such as ``(add x1 (mul 2.5 x2))``."""
    out, pending = [], []
    for node in prog:
        if isinstance(node, str):
            out.append("(" + node)
            pending.append(ARITY[node])
            continue
        out.append(repr(node) if _is_const(node) else names[node])
        while pending:
            pending[-1] -= 1
            if pending[-1]:
                break
            pending.pop()
            out[-1] += ")"
    return " ".join(out)


_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def parse_prefix(text: str, names) -> list:
    """Inverse of ``to_prefix``."""
    index = {n: i for i, n in enumerate(names)}
    prog, depth_stack = [], []
    for tok in _TOKEN.findall(text):
        if tok == "(":
            depth_stack.append(None)
        elif tok == ")":
            if not depth_stack:
                raise ValueError("unbalanced ')' in expression")
            depth_stack.pop()
        elif tok in ARITY and depth_stack and depth_stack[-1] is None:
            depth_stack[-1] = tok
            prog.append(tok)
        elif tok in index:
            prog.append(index[tok])
        else:
            try:
                prog.append(float(tok))
            except ValueError:
                raise ValueError(f"unknown token {tok!r} in expression") from None
    if depth_stack:
        raise ValueError("unbalanced '(' in expression")
    if not prog or subtree_end(prog, 0) != len(prog):
        raise ValueError("malformed expression")
    return prog


@dataclass(eq=False)
class ExprModel:
    program: list
    feature_names: tuple
    mse: float
    seed: Optional[int] = None
    generations: int = 0
    history: list = field(default_factory=list)  # best fitness per generation
    response: str = "y"
    train_rows: tuple = ()
    kind: str = field(default="expression", init=False)

    @property
    def node_count(self) -> int:
        return len(self.program)

    @property
    def expression(self) -> str:
        return to_prefix(self.program, self.feature_names)

    def predict(self, x):
        X, single = as_points(x, len(self.feature_names))
        out = evaluate(self.program, X)
        return float(out[0]) if single else out

    def formula(self, response: str = "cost") -> str:
        return f"{response} ≈ {self.expression}"


# -- evolution ------------------------------------------------------------------


class _Evolver:
    def __init__(self, data: Dataset, cfg: GPConfig):
        self.X, self.y, self.cfg = data.X, data.y, cfg
        self.n_features = data.X.shape[1]
        self.rng = np.random.default_rng(cfg.seed)

    def terminal(self):
        r = self.rng
        if self.n_features and r.integers(self.n_features + 1) < self.n_features:
            return int(r.integers(self.n_features))
        return float(r.uniform(*CONST_RANGE))

    def random_tree(self, max_d: int, full: bool) -> list:
        prog, open_slots = [], [1]
        n_terms = self.n_features + 1
        while open_slots:
            d = len(open_slots)
            open_slots[-1] -= 1
            leaf = d >= max_d or (not full and self.rng.integers(len(FUNCTIONS) + n_terms) >= len(FUNCTIONS))
            if leaf:
                prog.append(self.terminal())
            else:
                f = FUNCTIONS[int(self.rng.integers(len(FUNCTIONS)))]
                prog.append(f)
                open_slots.append(ARITY[f])
            while open_slots and open_slots[-1] == 0:
                open_slots.pop()
        return prog

    def mse(self, prog: list) -> float:
        pred = evaluate(prog, self.X)
        err = float(np.mean((pred - self.y) ** 2))
        return err if math.isfinite(err) else math.inf

    def fitness(self, prog: list, mse: Optional[float] = None) -> float:
        m = self.mse(prog) if mse is None else mse
        return m + self.cfg.parsimony * len(prog)

    def pick_node(self, prog: list) -> int:
        """Koza-style choice: function nodes 90% of the time when present."""
        funcs = [i for i, n in enumerate(prog) if isinstance(n, str)]
        if funcs and self.rng.random() < 0.9:
            return funcs[int(self.rng.integers(len(funcs)))]
        leaves = [i for i, n in enumerate(prog) if not isinstance(n, str)]
        return leaves[int(self.rng.integers(len(leaves)))]

    def tournament(self, fit: list) -> int:
        idx = self.rng.integers(len(fit), size=self.cfg.tournament_size)
        return int(min(idx, key=lambda i: (fit[i], i)))

    def offspring(self, pop: list, fit: list) -> list:
        parent = pop[self.tournament(fit)]
        r = self.rng.random()
        i = self.pick_node(parent)
        j = subtree_end(parent, i)
        if r < self.cfg.p_crossover:
            donor = pop[self.tournament(fit)]
            k = self.pick_node(donor)
            graft = donor[k:subtree_end(donor, k)]
        elif r < self.cfg.p_crossover + self.cfg.p_subtree_mutation:
            graft = self.random_tree(int(self.rng.integers(1, 5)), full=False)
        else:
            return list(parent)
        child = parent[:i] + graft + parent[j:]
        return child if depth(child) <= self.cfg.max_depth else list(parent)

    def initial_population(self) -> list:
        lo, hi = self.cfg.init_depth
        hi = min(hi, self.cfg.max_depth)
        depths = list(range(lo, hi + 1))
        return [self.random_tree(depths[i % len(depths)], full=bool((i // len(depths)) % 2))
                for i in range(self.cfg.population)]

    def tune_constants(self, prog: list) -> list:
        """Coordinate descent on each constant, ``tuning_steps`` steps each."""
        best = list(prog)
        best_err = self.mse(best)
        for pos in [i for i, n in enumerate(prog) if _is_const(n)]:
            step = max(abs(best[pos]) * 0.1, 0.1)
            for _ in range(self.cfg.tuning_steps):
                improved = False
                for delta in (step, -step):
                    cand = list(best)
                    cand[pos] = best[pos] + delta
                    err = self.mse(cand)
                    if err < best_err:
                        best, best_err, improved = cand, err, True
                        break
                if not improved:
                    step *= 0.5
                    if step < 1e-15:
                        break
        return best


def symbolic_regression(data: Dataset, config: GPConfig = GPConfig()) -> ExprModel:
    """Evolve an expression minimizing MSE + parsimony * node_count.

    The best individual of each generation is copied unchanged into the
    next, so the best fitness never increases. Fully determined by the
    config seed.
    """
    if len(data) == 0:
        raise EmptyDataset("cannot run symbolic regression on an empty dataset")
    ev = _Evolver(data, config)
    pop = ev.initial_population()
    errs = [ev.mse(p) for p in pop]
    fit = [ev.fitness(p, e) for p, e in zip(pop, errs)]
    history = []
    gens = 0
    while True:
        best = min(range(len(pop)), key=lambda i: (fit[i], i))
        history.append(fit[best])
        if gens >= config.generations or errs[best] <= config.stopping_mse:
            break
        new = [pop[best]] + [ev.offspring(pop, fit) for _ in range(config.population - 1)]
        pop = new
        errs = [errs[best]] + [ev.mse(p) for p in pop[1:]]
        fit = [fit[best]] + [ev.fitness(p, e) for p, e in zip(pop[1:], errs[1:])]
        gens += 1
    tuned = ev.tune_constants(pop[best])
    return ExprModel(
        program=tuned,
        feature_names=data.feature_names,
        mse=ev.mse(tuned),
        seed=config.seed,
        generations=gens,
        history=history,
        response=data.response,
        train_rows=data.row_ids,
    )
