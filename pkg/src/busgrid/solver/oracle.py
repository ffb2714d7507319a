"""Exhaustive enumeration over integer assignments, used as ground truth on tiny programs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..model.program import ConicProgram
from .base import ConicSubproblemSolver, Status


class OracleScaleError(ValueError):
    pass


@dataclass
class OracleResult:
    objective: float
    x: np.ndarray | None
    assignment: dict[str, int]
    evaluated: int
    feasible: int

    @property
    def found(self) -> bool:
        return self.x is not None


class _Propagator:
    """Bound tightening over the linear rows, used to cut partial assignments early."""

    def __init__(self, prog: ConicProgram, tol: float = 1e-9):
        M = prog.row_matrix.tocsr()
        self.rows = []
        for k, r in enumerate(prog.rows):
            lo, hi = M.indptr[k], M.indptr[k + 1]
            idx, coef = M.indices[lo:hi], M.data[lo:hi]
            scale = tol * max(1.0, abs(r.rhs))
            if r.sense.value in ("<=", "=="):
                self.rows.append((idx, coef, r.rhs + scale))
            if r.sense.value in (">=", "=="):
                self.rows.append((idx, -coef, -r.rhs + scale))
        self.integer = np.zeros(prog.n, dtype=bool)
        self.integer[prog.integer_indices] = True

    def run(self, lb: np.ndarray, ub: np.ndarray, passes: int = 4) -> bool:
        """Tighten ``lb``/``ub`` in place; ``False`` once some row cannot be met."""
        for _ in range(passes):
            changed = False
            for idx, coef, rhs in self.rows:
                # every row here reads coef @ x <= rhs
                low = np.where(coef > 0, lb[idx], ub[idx]) * coef
                if not np.all(np.isfinite(low)):
                    finite = np.isfinite(low)
                    if np.count_nonzero(~finite) > 1:
                        continue
                    total = low[finite].sum()
                    j = int(np.flatnonzero(~finite)[0])
                    cand = [(j, rhs - total)]
                else:
                    total = low.sum()
                    if total > rhs:
                        return False
                    cand = [(j, rhs - total + low[j]) for j in range(idx.size)]
                for j, room in cand:
                    i, a = idx[j], coef[j]
                    bound = room / a
                    if a > 0 and bound < ub[i] - 1e-12:
                        ub[i] = math.floor(bound + 1e-9) if self.integer[i] else bound
                        changed = True
                    elif a < 0 and bound > lb[i] + 1e-12:
                        lb[i] = math.ceil(bound - 1e-9) if self.integer[i] else bound
                        changed = True
                    if lb[i] > ub[i] + 1e-9:
                        return False
            if not changed:
                break
        return True


def enumerate_oracle(prog: ConicProgram, sub: ConicSubproblemSolver, max_binaries: int = 14) -> OracleResult:
    """Exact optimum over every integer assignment, one continuous solve per assignment.

    Partial assignments are cut as soon as bound propagation over the linear
    rows proves them infeasible; infeasible leaves are skipped. Propagation
    only tightens bounds the leaf solve would enforce anyway, so the optimum
    is unchanged.
    """
    idx = [int(i) for i in prog.integer_indices]
    if len(idx) > max_binaries:
        raise OracleScaleError(f"oracle scale exceeded: {len(idx)} integer variables > {max_binaries}")
    lb0, ub0 = prog.lb.copy(), prog.ub.copy()
    domains = []
    for i in idx:
        lo, hi = math.ceil(lb0[i] - 1e-9), math.floor(ub0[i] + 1e-9)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise OracleScaleError(f"oracle needs bounded integers; {prog.variables[i].name} is unbounded")
        domains.append(range(int(lo), int(hi) + 1))

    best = OracleResult(math.inf, None, {}, 0, 0)

    def leaf(lb, ub):
        # solve over the original box with only the integers pinned
        fixed_lb, fixed_ub = lb0.copy(), ub0.copy()
        fixed_lb[idx], fixed_ub[idx] = lb[idx], ub[idx]
        lb, ub = fixed_lb, fixed_ub
        best.evaluated += 1
        res = sub.solve(prog, lb, ub)
        if res.status == Status.NUMERICAL_FAILURE:
            res = sub.solve(prog, lb, ub, tight=True)
        if res.status != Status.OPTIMAL:
            return
        best.feasible += 1
        if res.objective < best.objective:
            best.objective = res.objective
            best.x = res.x
            best.assignment = {prog.variables[i].name: int(round(lb[i])) for i in idx}

    prop = _Propagator(prog)

    def walk(depth, lb, ub):
        if not prop.run(lb, ub):
            return
        if depth == len(idx):
            leaf(lb, ub)
            return
        i = idx[depth]
        for val in domains[depth]:
            if not lb[i] - 1e-9 <= val <= ub[i] + 1e-9:
                continue
            lb2, ub2 = lb.copy(), ub.copy()
            lb2[i] = ub2[i] = float(val)
            walk(depth + 1, lb2, ub2)

    walk(0, lb0, ub0)
    return best
