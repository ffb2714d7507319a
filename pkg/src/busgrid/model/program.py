"""Solver-facing conic program: bounded variables, sparse linear rows, second-order cones.

The program minimizes ``c @ x + c0`` subject to

* ``lb <= x <= ub`` with integrality marks per variable,
* rows ``a @ x (<=|==|>=) rhs``,
* cones ``||B x + b0||_2 <= a @ x + a0``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp


class VarKind(str, enum.Enum):
    CONTINUOUS = "C"
    BINARY = "B"
    INTEGER = "I"


class Sense(str, enum.Enum):
    LE = "<="
    EQ = "=="
    GE = ">="


@dataclass(frozen=True)
class Var:
    name: str
    lb: float
    ub: float
    kind: VarKind = VarKind.CONTINUOUS


@dataclass(frozen=True)
class Row:
    name: str
    coeffs: tuple[tuple[int, float], ...]
    sense: Sense
    rhs: float


@dataclass(frozen=True)
class Affine:
    coeffs: tuple[tuple[int, float], ...] = ()
    const: float = 0.0

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(c * x[i] for i, c in self.coeffs)


@dataclass(frozen=True)
class SocBlock:
    """``||body||_2 <= head``."""

    name: str
    head: Affine
    body: tuple[Affine, ...]


class ProgramError(ValueError):
    pass


def _merge(coeffs: Iterable[tuple[int, float]] | Mapping[int, float]) -> tuple[tuple[int, float], ...]:
    items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
    acc: dict[int, float] = {}
    for i, c in items:
        acc[i] = acc.get(i, 0.0) + float(c)
    return tuple(sorted((i, c) for i, c in acc.items() if c != 0.0))


@dataclass(frozen=True)
class ConicProgram:
    variables: tuple[Var, ...]
    rows: tuple[Row, ...]
    cones: tuple[SocBlock, ...]
    objective: tuple[tuple[int, float], ...]
    objective_constant: float = 0.0

    def __post_init__(self):
        n = len(self.variables)
        for r in self.rows:
            for i, _ in r.coeffs:
                if not 0 <= i < n:
                    raise ProgramError(f"row {r.name} references unknown variable {i}")
        for c in self.cones:
            for aff in (c.head, *c.body):
                for i, _ in aff.coeffs:
                    if not 0 <= i < n:
                        raise ProgramError(f"cone {c.name} references unknown variable {i}")
        for i, _ in self.objective:
            if not 0 <= i < n:
                raise ProgramError(f"objective references unknown variable {i}")

    @property
    def n(self) -> int:
        return len(self.variables)

    @cached_property
    def index(self) -> dict[str, int]:
        return {v.name: i for i, v in enumerate(self.variables)}

    @cached_property
    def lb(self) -> np.ndarray:
        return np.array([v.lb for v in self.variables], dtype=float)

    @cached_property
    def ub(self) -> np.ndarray:
        return np.array([v.ub for v in self.variables], dtype=float)

    @cached_property
    def integer_indices(self) -> np.ndarray:
        return np.array([i for i, v in enumerate(self.variables) if v.kind != VarKind.CONTINUOUS], dtype=int)

    @cached_property
    def c(self) -> np.ndarray:
        out = np.zeros(self.n)
        for i, v in self.objective:
            out[i] += v
        return out

    @cached_property
    def row_matrix(self) -> sp.csr_matrix:
        data, ri, ci = [], [], []
        for k, r in enumerate(self.rows):
            for i, v in r.coeffs:
                ri.append(k)
                ci.append(i)
                data.append(v)
        return sp.csr_matrix((data, (ri, ci)), shape=(len(self.rows), self.n))

    @cached_property
    def rhs(self) -> np.ndarray:
        return np.array([r.rhs for r in self.rows], dtype=float)

    @cached_property
    def senses(self) -> np.ndarray:
        return np.array([r.sense.value for r in self.rows])

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.objective_constant

    def violations(self, x: np.ndarray, lb: np.ndarray | None = None, ub: np.ndarray | None = None) -> dict[str, float]:
        """Largest scaled violation per constraint family.

        Each violation is divided by ``max(1, |rhs|)`` (rows, bounds) or
        ``max(1, |head|)`` (cones) so kWh- and dollar-scale rows compare
        on the same footing.
        """
        x = np.asarray(x, dtype=float)
        lb = self.lb if lb is None else lb
        ub = self.ub if ub is None else ub
        bound = np.maximum(np.maximum(lb - x, 0.0) / np.maximum(1.0, np.abs(lb)),
                           np.maximum(x - ub, 0.0) / np.maximum(1.0, np.abs(ub)))
        bound = np.where(np.isfinite(bound), bound, 0.0)
        out = {"bounds": float(bound.max(initial=0.0)), "rows": 0.0, "cones": 0.0}
        if self.rows:
            act = self.row_matrix @ x
            res = act - self.rhs
            s = self.senses
            viol = np.where(s == "<=", np.maximum(res, 0.0), np.where(s == ">=", np.maximum(-res, 0.0), np.abs(res)))
            out["rows"] = float((viol / np.maximum(1.0, np.abs(self.rhs))).max())
        worst = 0.0
        for cone in self.cones:
            t = cone.head.value(x)
            u = math.sqrt(sum(b.value(x) ** 2 for b in cone.body))
            worst = max(worst, max(0.0, u - t) / max(1.0, abs(t)))
        out["cones"] = worst
        return out

    def max_violation(self, x: np.ndarray, lb: np.ndarray | None = None, ub: np.ndarray | None = None) -> float:
        return max(self.violations(x, lb, ub).values())

    def integrality_gap(self, x: np.ndarray) -> float:
        idx = self.integer_indices
        if idx.size == 0:
            return 0.0
        return float(np.max(np.abs(x[idx] - np.round(x[idx]))))

    def relaxed(self) -> "ConicProgram":
        vs = tuple(Var(v.name, v.lb, v.ub, VarKind.CONTINUOUS) for v in self.variables)
        return ConicProgram(vs, self.rows, self.cones, self.objective, self.objective_constant)

    def with_kinds(self, kinds: Mapping[int, VarKind]) -> "ConicProgram":
        vs = tuple(Var(v.name, v.lb, v.ub, kinds.get(i, v.kind)) for i, v in enumerate(self.variables))
        return ConicProgram(vs, self.rows, self.cones, self.objective, self.objective_constant)

    def counts(self) -> dict[str, int]:
        kinds = [v.kind for v in self.variables]
        return {
            "variables": self.n,
            "continuous": kinds.count(VarKind.CONTINUOUS),
            "binary": kinds.count(VarKind.BINARY),
            "integer": kinds.count(VarKind.INTEGER),
            "rows": len(self.rows),
            "cones": len(self.cones),
        }

    # text form: one record per line, whitespace separated
    #   VAR <index> <name> <kind> <lb> <ub>
    #   OBJ <constant> <i>:<coef> ...
    #   ROW <name> <sense> <rhs> <i>:<coef> ...
    #   SOC <name> <head> | <body_1> | ... where each affine is <const> <i>:<coef> ...
    def to_text(self) -> str:
        def aff(a: Affine) -> str:
            return " ".join([repr(a.const)] + [f"{i}:{c!r}" for i, c in a.coeffs])

        lines = [f"# conic program: {self.n} variables, {len(self.rows)} rows, {len(self.cones)} cones"]
        for i, v in enumerate(self.variables):
            lines.append(f"VAR {i} {v.name} {v.kind.value} {v.lb!r} {v.ub!r}")
        lines.append(" ".join(["OBJ", repr(self.objective_constant)] + [f"{i}:{c!r}" for i, c in self.objective]))
        for r in self.rows:
            lines.append(" ".join(["ROW", r.name, r.sense.value, repr(r.rhs)] + [f"{i}:{c!r}" for i, c in r.coeffs]))
        for c in self.cones:
            lines.append(f"SOC {c.name} " + " | ".join([aff(c.head)] + [aff(b) for b in c.body]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ConicProgram":
        def pairs(tokens):
            out = []
            for t in tokens:
                i, c = t.split(":")
                out.append((int(i), float(c)))
            return tuple(out)

        def aff(chunk: str) -> Affine:
            toks = chunk.split()
            return Affine(pairs(toks[1:]), float(toks[0]))

        variables, rows, cones = [], [], []
        objective, const = (), 0.0
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            tag, rest = line.split(" ", 1)
            if tag == "VAR":
                _, name, kind, lb, ub = rest.split()
                variables.append(Var(name, float(lb), float(ub), VarKind(kind)))
            elif tag == "OBJ":
                toks = rest.split()
                const, objective = float(toks[0]), pairs(toks[1:])
            elif tag == "ROW":
                toks = rest.split()
                rows.append(Row(toks[0], pairs(toks[3:]), Sense(toks[1]), float(toks[2])))
            elif tag == "SOC":
                name, body = rest.split(" ", 1)
                chunks = [aff(ch) for ch in body.split("|")]
                cones.append(SocBlock(name, chunks[0], tuple(chunks[1:])))
            else:
                raise ProgramError(f"unknown record {tag!r}")
        return cls(tuple(variables), tuple(rows), tuple(cones), objective, const)


@dataclass
class ProgramBuilder:
    variables: list[Var] = field(default_factory=list)
    rows: list[Row] = field(default_factory=list)
    cones: list[SocBlock] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    objective_constant: float = 0.0
    _names: dict[str, int] = field(default_factory=dict)
    _row_keys: set = field(default_factory=set)

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf,
                kind: VarKind = VarKind.CONTINUOUS) -> int:
        if name in self._names:
            raise ProgramError(f"duplicate variable {name}")
        if kind == VarKind.BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            raise ProgramError(f"variable {name}: lb > ub")
        self._names[name] = len(self.variables)
        self.variables.append(Var(name, float(lb), float(ub), kind))
        return self._names[name]

    def add_row(self, name: str, coeffs, sense: Sense | str, rhs: float) -> int | None:
        """Append a row; returns its index, or ``None`` for an exact duplicate."""
        merged = _merge(coeffs)
        sense = Sense(sense)
        key = (merged, sense, float(rhs))
        if key in self._row_keys:
            return None
        self._row_keys.add(key)
        self.rows.append(Row(name, merged, sense, float(rhs)))
        return len(self.rows) - 1

    def add_cone(self, name: str, head: Affine, body: Iterable[Affine]) -> int:
        self.cones.append(SocBlock(name, head, tuple(body)))
        return len(self.cones) - 1

    def add_objective(self, i: int, coef: float) -> None:
        self.objective[i] = self.objective.get(i, 0.0) + float(coef)

    def build(self) -> ConicProgram:
        return ConicProgram(tuple(self.variables), tuple(self.rows), tuple(self.cones), _merge(self.objective),
                            self.objective_constant)
