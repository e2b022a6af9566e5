"""Per-parameter symbolic/concrete declarations (SymbolSpec) and their JSON form.

A spec file is a JSON object keyed by parameter name::

    {
      "n": {"symbolic": true, "domain": [0, 7]},
      "c": {"symbolic": false, "value": 4},
      "a": {"symbolic": true, "length": 4, "domain": [-9, 9]},
      "b": {"symbolic": false, "values": [1, 2, 3]}
    }

``length`` is optional for arrays; when present it must agree with the
function signature.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .ir import INT_MAX, INT_MIN, Function


@dataclass(frozen=True)
class ParamSpec:
    symbolic: bool
    lo: Optional[int] = None
    hi: Optional[int] = None
    value: Optional[int] = None
    values: Optional[tuple] = None
    length: Optional[int] = None

    def __post_init__(self):
        if self.symbolic:
            if self.lo is None or self.hi is None:
                raise ValueError("symbolic parameters need a domain [lo, hi]")
            if not (INT_MIN <= self.lo <= self.hi <= INT_MAX):
                raise ValueError(f"bad domain [{self.lo}, {self.hi}]")
        elif self.length is None and self.value is None:
            raise ValueError("concrete scalars need a value")
        elif self.length is not None and not self.symbolic:
            if self.values is None or len(self.values) != self.length:
                raise ValueError(f"concrete array needs exactly {self.length} values")

    @property
    def is_array(self) -> bool:
        return self.length is not None

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1

    @classmethod
    def symbolic_scalar(cls, lo: int, hi: int) -> "ParamSpec":
        return cls(True, lo, hi)

    @classmethod
    def concrete_scalar(cls, value: int) -> "ParamSpec":
        return cls(False, value=value)

    @classmethod
    def symbolic_array(cls, length: int, lo: int, hi: int) -> "ParamSpec":
        return cls(True, lo, hi, length=length)

    @classmethod
    def concrete_array(cls, values) -> "ParamSpec":
        values = tuple(int(v) for v in values)
        return cls(False, values=values, length=len(values))

    def to_json(self) -> dict:
        d: dict = {"symbolic": self.symbolic}
        if self.is_array:
            d["length"] = self.length
        if self.symbolic:
            d["domain"] = [self.lo, self.hi]
        elif self.is_array:
            d["values"] = list(self.values)
        else:
            d["value"] = self.value
        return d


@dataclass(frozen=True)
class SymbolSpec:
    params: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> ParamSpec:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def with_param(self, name: str, spec: ParamSpec) -> "SymbolSpec":
        params = dict(self.params)
        params[name] = spec
        return SymbolSpec(params)

    def symbolic_names(self) -> list:
        return [n for n, p in self.params.items() if p.symbolic]

    def check(self, f: Function) -> None:
        """Raise ValueError unless the spec covers every parameter of ``f``
        with a matching kind and array length."""
        for p in f.params:
            if p.name not in self.params:
                raise ValueError(f"spec has no entry for parameter {p.name!r}")
            ps = self.params[p.name]
            if p.is_array != ps.is_array:
                kind = "an array" if p.is_array else "a scalar"
                raise ValueError(f"parameter {p.name!r} is {kind} in the signature")
            if p.is_array and ps.length != p.length:
                raise ValueError(f"array {p.name!r}: spec length {ps.length}, signature length {p.length}")
        extra = set(self.params) - {p.name for p in f.params}
        if extra:
            raise ValueError(f"spec names unknown parameters: {sorted(extra)}")

    def resized(self, name: str, length: int) -> "SymbolSpec":
        """Copy with array ``name`` resized; concrete contents are truncated
        or zero-padded."""
        ps = self.params[name]
        if ps.symbolic:
            return self.with_param(name, replace(ps, length=length))
        vals = tuple(ps.values[:length]) + (0,) * max(0, length - len(ps.values))
        return self.with_param(name, ParamSpec.concrete_array(vals))

    def to_json(self) -> dict:
        return {n: p.to_json() for n, p in self.params.items()}

    @classmethod
    def from_json(cls, data: dict, f: Optional[Function] = None) -> "SymbolSpec":
        params = {}
        for name, d in data.items():
            symbolic = bool(d.get("symbolic", False))
            length = d.get("length")
            if f is not None and length is None:
                p = f.param(name)
                if p is not None and p.is_array:
                    length = p.length
            if length is None and "values" in d:
                length = len(d["values"])
            if symbolic:
                lo, hi = d["domain"]
                params[name] = ParamSpec(True, int(lo), int(hi), length=length)
            elif length is not None:
                params[name] = ParamSpec(False, values=tuple(int(v) for v in d["values"]), length=length)
            else:
                params[name] = ParamSpec.concrete_scalar(int(d["value"]))
        spec = cls(params)
        if f is not None:
            spec.check(f)
        return spec


def load_spec(path, f: Optional[Function] = None) -> SymbolSpec:
    return SymbolSpec.from_json(json.loads(Path(path).read_text(encoding="utf-8")), f)


def save_spec(spec: SymbolSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_json(), indent=2) + "\n", encoding="utf-8")
