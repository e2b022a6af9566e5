import copy
import itertools
import random
from pathlib import Path

import pytest

from verimodel import CORPUS_DIR
from verimodel.frontend import parse_program
from verimodel.interp import Trap, interpret
from verimodel.symbols import load_spec

CORPUS_PROGRAMS = sorted(p.name for p in CORPUS_DIR.glob("*.mc"))


def load_corpus(name):
    """(parsed program, spec) for a corpus file name such as ``gcd.mc``."""
    path = CORPUS_DIR / name
    program = parse_program(path.read_text(encoding="utf-8"))
    spec = load_spec(path.with_suffix(".spec.json"), program.entry_function)
    return program, spec


def random_inputs(f, rng: random.Random, lo=-20, hi=20):
    inp = {}
    for p in f.params:
        if p.is_array:
            inp[p.name] = [rng.randint(lo, hi) for _ in range(p.length)]
        else:
            inp[p.name] = rng.randint(lo, hi)
    return inp


def grid_inputs(f, spec):
    """Every concrete input the spec allows."""
    axes = []
    for p in f.params:
        ps = spec[p.name]
        if p.is_array:
            if ps.symbolic:
                axes.append([list(t) for t in itertools.product(range(ps.lo, ps.hi + 1), repeat=p.length)])
            else:
                axes.append([list(ps.values)])
        else:
            axes.append(list(range(ps.lo, ps.hi + 1)) if ps.symbolic else [ps.value])
    names = [p.name for p in f.params]
    for combo in itertools.product(*axes):
        yield dict(zip(names, copy.deepcopy(combo)))


def grid_size(f, spec):
    n = 1
    for p in f.params:
        ps = spec[p.name]
        if ps.symbolic:
            n *= (ps.hi - ps.lo + 1) ** (p.length or 1)
    return n


def distinct_decision_sequences(program, spec):
    """Path-count oracle: distinct interpreter decision traces over the grid."""
    seen = set()
    for inp in grid_inputs(program.entry_function, spec):
        trace = []
        interpret(program, inp, trace=trace)
        seen.add(tuple(trace))
    return len(seen)


def same_outcome(a, b):
    if isinstance(a, Trap) or isinstance(b, Trap):
        return isinstance(a, Trap) and isinstance(b, Trap) and a.kind == b.kind
    return a == b


@pytest.fixture
def corpus_dir():
    return Path(CORPUS_DIR)


# acceptance criteria outcomes, echoed in the terminal summary
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_RESULTS, key=lambda l: int(l.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
