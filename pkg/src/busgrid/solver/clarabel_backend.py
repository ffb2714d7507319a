"""Conic subproblem solver backed by the Clarabel interior-point library."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

import clarabel

from ..model.program import ConicProgram
from .base import FEASIBILITY_TOL, Status, SubResult

_OK = {clarabel.SolverStatus.Solved}
_ALMOST = {clarabel.SolverStatus.AlmostSolved}
_INFEASIBLE = {clarabel.SolverStatus.PrimalInfeasible, clarabel.SolverStatus.AlmostPrimalInfeasible}


class _Static:
    """Row and cone blocks of ``A x + s = b`` that do not depend on bounds."""

    def __init__(self, prog: ConicProgram):
        eq, le = [], []
        for k, r in enumerate(prog.rows):
            if r.sense.value == "==":
                eq.append((k, 1.0))
            elif r.sense.value == "<=":
                le.append((k, 1.0))
            else:
                le.append((k, -1.0))
        M = prog.row_matrix
        rhs = prog.rhs

        def block(sel):
            if not sel:
                return sp.csr_matrix((0, prog.n)), np.zeros(0)
            idx = np.array([k for k, _ in sel])
            sign = np.array([s for _, s in sel])
            return sp.diags(sign) @ M[idx], sign * rhs[idx]

        self.A_eq, self.b_eq = block(eq)
        self.A_le, self.b_le = block(le)
        data, ri, ci, b = [], [], [], []
        dims = []
        row = 0
        for cone in prog.cones:
            affs = (cone.head, *cone.body)
            for aff in affs:
                for i, c in aff.coeffs:
                    ri.append(row)
                    ci.append(i)
                    data.append(-c)
                b.append(aff.const)
                row += 1
            dims.append(len(affs))
        self.A_soc = sp.csr_matrix((data, (ri, ci)), shape=(row, prog.n))
        self.b_soc = np.array(b, dtype=float)
        self.soc_dims = dims
        self.scale = max(1.0, float(np.max(np.abs(prog.c), initial=0.0)))


class ClarabelSolver:
    """Solve relaxations with Clarabel, rebuilding only the bound rows per call."""

    def __init__(self, tol: float = 1e-9, max_iter: int = 200):
        self.tol = tol
        self.max_iter = max_iter
        self._prog: ConicProgram | None = None
        self._static: _Static | None = None

    def _settings(self, tight: bool) -> "clarabel.DefaultSettings":
        s = clarabel.DefaultSettings()
        s.verbose = False
        tol = self.tol * (1e-2 if tight else 1.0)
        s.tol_gap_abs = tol
        s.tol_gap_rel = tol
        s.tol_feas = tol
        s.tol_ktratio = 1e-7 if not tight else 1e-8
        s.max_iter = self.max_iter * (2 if tight else 1)
        return s

    def solve(self, prog: ConicProgram, lb: np.ndarray | None = None, ub: np.ndarray | None = None,
              tight: bool = False) -> SubResult:
        if self._prog is not prog:
            self._prog, self._static = prog, _Static(prog)
        st = self._static
        lb = prog.lb if lb is None else np.asarray(lb, dtype=float)
        ub = prog.ub if ub is None else np.asarray(ub, dtype=float)
        n = prog.n
        if np.any(lb > ub + 1e-12):
            return SubResult(Status.INFEASIBLE)

        fixed = np.isfinite(lb) & np.isfinite(ub) & (ub - lb <= 1e-12)
        fix_idx = np.flatnonzero(fixed)
        lo_idx = np.flatnonzero(np.isfinite(lb) & ~fixed)
        hi_idx = np.flatnonzero(np.isfinite(ub) & ~fixed)
        eye = sp.identity(n, format="csr")
        A_fix, b_fix = eye[fix_idx], lb[fix_idx]
        A_lo, b_lo = -eye[lo_idx], -lb[lo_idx]
        A_hi, b_hi = eye[hi_idx], ub[hi_idx]
        A = sp.vstack([st.A_eq, A_fix, st.A_le, A_lo, A_hi, st.A_soc], format="csc")
        b = np.concatenate([st.b_eq, b_fix, st.b_le, b_lo, b_hi, st.b_soc])
        cones = []
        n_zero = st.A_eq.shape[0] + len(fix_idx)
        n_nonneg = st.A_le.shape[0] + len(lo_idx) + len(hi_idx)
        if n_zero:
            cones.append(clarabel.ZeroConeT(n_zero))
        if n_nonneg:
            cones.append(clarabel.NonnegativeConeT(n_nonneg))
        cones.extend(clarabel.SecondOrderConeT(d) for d in st.soc_dims)
        P = sp.csc_matrix((n, n))
        q = prog.c / st.scale
        solver = clarabel.DefaultSolver(P, q, A, b, cones, self._settings(tight))
        sol = solver.solve()
        status = sol.status
        if status in _INFEASIBLE:
            return SubResult(Status.INFEASIBLE, iterations=sol.iterations)
        if status not in _OK and status not in _ALMOST:
            return SubResult(Status.NUMERICAL_FAILURE, iterations=sol.iterations)
        x = np.array(sol.x, dtype=float)
        # clip tiny bound excursions left by the interior-point iterate
        x = np.where(np.isfinite(lb), np.maximum(x, lb), x)
        x = np.where(np.isfinite(ub), np.minimum(x, ub), x)
        if prog.max_violation(x, lb, ub) > FEASIBILITY_TOL:
            return SubResult(Status.NUMERICAL_FAILURE, x=x, objective=prog.objective_value(x),
                             iterations=sol.iterations)
        return SubResult(Status.OPTIMAL, x=x, objective=prog.objective_value(x), iterations=sol.iterations)
