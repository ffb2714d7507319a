"""Contracts shared by the branch-and-bound driver and its conic subproblem solvers."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from ..model.program import ConicProgram

FEASIBILITY_TOL = 1e-7


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    NUMERICAL_FAILURE = "NumericalFailure"
    BOUND_LIMIT = "BoundLimit"


@dataclass
class SubResult:
    status: Status
    x: np.ndarray | None = None
    objective: float = float("nan")
    iterations: int = 0


class ConicSubproblemSolver(Protocol):
    """Solves the continuous relaxation of a program under bound overrides.

    Integrality marks are ignored. On ``Optimal`` the point satisfies every
    bound, row and cone within :data:`FEASIBILITY_TOL` (scaled as in
    :meth:`ConicProgram.violations`).
    """

    def solve(self, prog: ConicProgram, lb: np.ndarray | None = None, ub: np.ndarray | None = None,
              tight: bool = False) -> SubResult: ...
