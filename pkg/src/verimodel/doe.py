"""Two-level experimental designs, their instantiation and factor screening."""

from __future__ import annotations

import csv
import io
import itertools
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .features import FIXED_COLUMNS, extract_features
from .ir import Function, Param, Program
from .symbols import ParamSpec, SymbolSpec
from .symexec import Limits

SOURCES = ("scalar-value", "domain-width", "array-size", "loop-cap", "static-feature")
MAX_FULL_FACTORS = 16
PB12_GENERATOR = (1, 1, -1, 1, 1, 1, -1, -1, -1, 1, -1)


class TooManyFactors(ValueError):
    pass


class InvalidFraction(ValueError):
    pass


class UnresolvableFactor(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Factor:
    """A two-level factor; coded -1/+1 decode to ``low``/``high``.

    ``target`` names the parameter (scalar-value, domain-width, array-size)
    or the static feature (static-feature); it is unused for loop-cap.
    """

    name: str
    source: str
    low: int
    high: int
    target: Optional[str] = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown factor source {self.source!r}")
        if not self.low < self.high:
            raise ValueError(f"factor {self.name!r}: low must be < high")
        if self.source != "loop-cap" and not self.target:
            raise ValueError(f"factor {self.name!r}: source {self.source!r} needs a target")

    @property
    def key(self) -> tuple:
        return (self.source, self.target)

    def decode(self, level: int) -> int:
        return self.high if level > 0 else self.low

    def to_json(self) -> dict:
        d = {"name": self.name, "source": self.source, "low": self.low, "high": self.high}
        if self.target is not None:
            d["target"] = self.target
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Factor":
        return cls(d["name"], d["source"], int(d["low"]), int(d["high"]), d.get("target"))


def load_factors(path) -> list:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        data = data["factors"]
    factors = [Factor.from_json(d) for d in data]
    _check_unique(factors)
    return factors


def _check_unique(factors) -> None:
    names, keys = set(), set()
    for f in factors:
        if f.name in names:
            raise ValueError(f"duplicate factor name {f.name!r}")
        if f.key in keys:
            raise ValueError(f"factor {f.name!r} varies the same source as another factor")
        names.add(f.name)
        keys.add(f.key)


@dataclass(frozen=True)
class DesignMatrix:
    factors: tuple
    rows: np.ndarray  # int8 array, shape (runs, factors), entries -1/+1
    kind: str  # "full-factorial" | "fractional" | "plackett-burman"
    generators: tuple = ()  # for fractional designs: tuple of base-column index tuples

    @property
    def names(self) -> list:
        return [f.name for f in self.factors]

    def __len__(self) -> int:
        return len(self.rows)

    def replicate(self, r: int) -> "DesignMatrix":
        if r < 1:
            raise ValueError("replicates must be >= 1")
        return replace(self, rows=np.tile(self.rows, (r, 1)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run_index"] + self.names)
        for i, row in enumerate(self.rows):
            w.writerow([i] + [int(v) for v in row])
        return buf.getvalue()


def full_factorial(factors) -> DesignMatrix:
    """All 2^k sign combinations in lexicographic order (-1 before +1, first
    factor varying slowest)."""
    factors = tuple(factors)
    k = len(factors)
    if k < 1:
        raise ValueError("need at least one factor")
    if k > MAX_FULL_FACTORS:
        raise TooManyFactors(f"full factorial supports at most {MAX_FULL_FACTORS} factors, got {k}")
    rows = np.array(list(itertools.product((-1, 1), repeat=k)), dtype=np.int8)
    return DesignMatrix(factors, rows, "full-factorial")


def plackett_burman(factors) -> DesignMatrix:
    """12-run Plackett-Burman design: 11 cyclic shifts of the standard
    generator row plus a row of all -1, truncated to the first n columns."""
    factors = tuple(factors)
    k = len(factors)
    if k < 1:
        raise ValueError("need at least one factor")
    if k > 11:
        raise TooManyFactors(f"Plackett-Burman-12 supports at most 11 factors, got {k}")
    g = np.array(PB12_GENERATOR, dtype=np.int8)
    rows = [np.roll(g, i) for i in range(11)] + [-np.ones(11, dtype=np.int8)]
    return DesignMatrix(factors, np.array(rows, dtype=np.int8)[:, :k], "plackett-burman")


def _generator_subsets(base: int, p: int) -> list:
    """The p largest base-column subsets (ties in lexicographic order)."""
    cands = []
    for size in range(base, 0, -1):
        cands.extend(itertools.combinations(range(base), size))
    if p > len(cands):
        raise InvalidFraction(f"cannot generate {p} columns from {base} base columns")
    return cands[:p]


def fractional_factorial(factors, p: int) -> DesignMatrix:
    """2^(k-p) design: full factorial on the first k-p factors, each of the
    last p columns the elementwise product of a generator subset."""
    factors = tuple(factors)
    k = len(factors)
    if not (0 <= p < k):
        raise InvalidFraction(f"need 0 <= p < k, got p={p}, k={k}")
    if p == 0:
        return full_factorial(factors)
    base = full_factorial(factors[: k - p]).rows.astype(np.int64)
    gens = _generator_subsets(k - p, p)
    extra = [np.prod(base[:, list(g)], axis=1) for g in gens]
    rows = np.column_stack([base] + extra).astype(np.int8)
    return DesignMatrix(factors, rows, "fractional", tuple(gens))


def make_design(factors, kind: str) -> DesignMatrix:
    """``kind`` is ``full``, ``pb`` or ``frac:<p>``."""
    if kind == "full":
        return full_factorial(factors)
    if kind == "pb":
        return plackett_burman(factors)
    if kind.startswith("frac:"):
        try:
            p = int(kind.split(":", 1)[1])
        except ValueError as exc:
            raise InvalidFraction(f"bad fraction spec {kind!r}") from exc
        return fractional_factorial(factors, p)
    raise ValueError(f"unknown design kind {kind!r}")


# -- instantiation --------------------------------------------------------------


@dataclass(frozen=True)
class Template:
    program: Program
    spec: SymbolSpec
    limits: Limits = Limits()
    variants: tuple = ()  # alternative Programs for static-feature factors


@dataclass(frozen=True)
class Experiment:
    run_index: int
    program: Program
    spec: SymbolSpec
    limits: Limits
    settings: dict = field(default_factory=dict)  # factor name -> decoded value
    coded: tuple = ()


def _resize_param(program: Program, name: str, length: int) -> Program:
    f = program.entry_function
    params = tuple(Param(p.name, length, p.loc) if p.name == name else p for p in f.params)
    return program.replace_function(Function(f.name, params, f.body, f.loc))


def _resolve(template: Template, factor: Factor) -> None:
    f = template.program.entry_function
    if factor.source in ("scalar-value", "domain-width", "array-size"):
        p = f.param(factor.target)
        if p is None:
            raise UnresolvableFactor(f"factor {factor.name!r}: no parameter {factor.target!r}")
        if p.is_array != (factor.source == "array-size"):
            raise UnresolvableFactor(
                f"factor {factor.name!r}: {factor.source} does not apply to parameter {factor.target!r}")
        if factor.source != "scalar-value" and factor.low < 1:
            raise UnresolvableFactor(f"factor {factor.name!r}: levels must be >= 1")
    elif factor.source == "loop-cap":
        if factor.low < 1:
            raise UnresolvableFactor(f"factor {factor.name!r}: loop cap must be >= 1")
    elif factor.source == "static-feature":
        if factor.target not in FIXED_COLUMNS:
            raise UnresolvableFactor(f"factor {factor.name!r}: unknown static feature {factor.target!r}")
        if not template.variants:
            raise UnresolvableFactor(f"factor {factor.name!r}: no program variants supplied")


def instantiate(design: DesignMatrix, template: Template) -> list:
    """One Experiment per design row.

    Decoding rules: scalar-value fixes the parameter to a concrete value;
    domain-width ``w`` makes it symbolic over [0, w-1]; array-size changes
    the signature length (concrete contents are truncated or zero-padded);
    loop-cap sets ``Limits.max_loop_iterations``; static-feature factors
    pick the program variant whose extracted feature equals each level.
    """
    for fac in design.factors:
        _resolve(template, fac)
    static = [fac for fac in design.factors if fac.source == "static-feature"]
    experiments = []
    for i, row in enumerate(design.rows):
        program, spec, limits = template.program, template.spec, template.limits
        settings = {}
        for fac, level in zip(design.factors, row):
            v = fac.decode(int(level))
            settings[fac.name] = v
        if static:
            wanted = {fac.target: settings[fac.name] for fac in static}
            match = None
            for variant in (template.program,) + tuple(template.variants):
                fv = extract_features(variant.entry_function, spec).as_dict()
                if all(fv[k] == v for k, v in wanted.items()):
                    match = variant
                    break
            if match is None:
                raise UnresolvableFactor(f"no program variant has features {wanted}")
            program = match
        for fac in design.factors:
            v = settings[fac.name]
            if fac.source == "scalar-value":
                spec = spec.with_param(fac.target, ParamSpec.concrete_scalar(v))
            elif fac.source == "domain-width":
                spec = spec.with_param(fac.target, ParamSpec.symbolic_scalar(0, v - 1))
            elif fac.source == "array-size":
                program = _resize_param(program, fac.target, v)
                spec = spec.resized(fac.target, v)
            elif fac.source == "loop-cap":
                limits = replace(limits, max_loop_iterations=v)
        experiments.append(Experiment(i, program, spec, limits, settings, tuple(int(x) for x in row)))
    return experiments


# -- analysis -------------------------------------------------------------------


def main_effects(design: DesignMatrix, responses) -> dict:
    """mean(response at +1) - mean(response at -1), per factor."""
    y = np.asarray(responses, dtype=float)
    if y.shape != (len(design.rows),):
        raise LengthMismatch(f"{len(y)} responses for {len(design.rows)} design rows")
    out = {}
    for j, fac in enumerate(design.factors):
        col = design.rows[:, j]
        out[fac.name] = float(y[col > 0].mean() - y[col < 0].mean())
    return out


def screen(effects: dict, threshold: Optional[float] = None, top_k: Optional[int] = None) -> list:
    """Select relevant factors by |effect| >= threshold, or the top_k largest.

    Ties keep declaration order. At least one factor is returned unless all
    effects are exactly zero, in which case a warning is issued.
    """
    if not effects:
        raise ValueError("no effects to screen")
    if (threshold is None) == (top_k is None):
        raise ValueError("give exactly one of threshold or top_k")
    names = list(effects)
    if all(effects[n] == 0 for n in names):
        warnings.warn("all main effects are zero; no factor selected", stacklevel=2)
        return []
    ranked = sorted(names, key=lambda n: (-abs(effects[n]), names.index(n)))
    if top_k is not None:
        chosen = set(ranked[:top_k])
    else:
        chosen = {n for n in names if abs(effects[n]) >= threshold and (threshold > 0 or effects[n] != 0)}
        if not chosen:
            chosen = {ranked[0]}
    return [n for n in names if n in chosen]
