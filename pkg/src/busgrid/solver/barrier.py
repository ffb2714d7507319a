"""Dense log-barrier solver for tiny conic programs.

Slow and only meant for cross-checking the production backend on programs
with at most a couple of hundred variables. Fixed variables and singleton
rows are folded into bounds, equalities are removed by a nullspace
parametrization, a phase-I problem finds an interior point and a standard
barrier path-following loop does the rest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..model.program import ConicProgram
from .base import FEASIBILITY_TOL, Status, SubResult

MAX_VARIABLES = 200


@dataclass
class _Reduced:
    free: np.ndarray          # indices of non-fixed variables
    xfix: np.ndarray          # full-length vector holding the fixed values
    x0: np.ndarray            # particular solution of the equalities (free space)
    N: np.ndarray             # nullspace basis
    G: np.ndarray             # linear inequalities G xi <= h
    h: np.ndarray
    cones: list               # (a, a0, B, b) with ||B xi + b|| <= a xi + a0
    c: np.ndarray             # objective in xi
    c0: float


class _Infeasible(Exception):
    pass


def _presolve(prog: ConicProgram, lb: np.ndarray, ub: np.ndarray, tol: float):
    lb, ub = lb.copy(), ub.copy()
    M = prog.row_matrix.toarray()
    rhs = prog.rhs.copy()
    senses = list(prog.senses)
    active = np.ones(len(rhs), dtype=bool)
    changed = True
    while changed:
        changed = False
        fixed = ub - lb <= 1e-12
        for k in np.flatnonzero(active):
            row = M[k]
            nz = np.flatnonzero((row != 0) & ~fixed)
            r = rhs[k] - row[fixed] @ lb[fixed]
            scale = max(1.0, abs(rhs[k]))
            if nz.size == 0:
                s = senses[k]
                if (s == "<=" and r < -tol * scale) or (s == ">=" and r > tol * scale) or \
                        (s == "==" and abs(r) > tol * scale):
                    raise _Infeasible
                active[k] = False
                changed = True
            elif nz.size == 1:
                j = nz[0]
                val = r / row[j]
                s = senses[k]
                if s == "==":
                    lo = hi = val
                elif (s == "<=") == (row[j] > 0):
                    lo, hi = -math.inf, val
                else:
                    lo, hi = val, math.inf
                new_lb, new_ub = max(lb[j], lo), min(ub[j], hi)
                if new_lb > new_ub + tol * max(1.0, abs(new_ub)):
                    raise _Infeasible
                if new_lb > new_ub:
                    new_lb = new_ub = 0.5 * (new_lb + new_ub)
                lb[j], ub[j] = new_lb, new_ub
                active[k] = False
                changed = True
    return lb, ub, M[active], rhs[active], [s for s, a in zip(senses, active) if a]


def _reduce(prog: ConicProgram, lb, ub, tol) -> _Reduced:
    lb, ub, M, rhs, senses = _presolve(prog, lb, ub, tol)
    n = prog.n
    fixed = ub - lb <= 1e-12
    free = np.flatnonzero(~fixed)
    xfix = np.where(fixed, lb, 0.0)
    Mf = M[:, free]
    shift = M @ xfix
    r = rhs - shift

    eq = np.array([s == "==" for s in senses], dtype=bool)
    A, b = Mf[eq], r[eq]
    nf = free.size
    if A.shape[0]:
        U, S, Vt = np.linalg.svd(A, full_matrices=True)
        rank = int(np.sum(S > 1e-10 * max(1.0, S.max(initial=0.0))))
        x0 = np.linalg.lstsq(A, b, rcond=None)[0]
        if np.max(np.abs(A @ x0 - b) / np.maximum(1.0, np.abs(b)), initial=0.0) > tol:
            raise _Infeasible
        N = Vt[rank:].T
    else:
        x0 = np.zeros(nf)
        N = np.eye(nf)

    Gs, hs = [], []
    for k in np.flatnonzero(~eq):
        if senses[k] == "<=":
            Gs.append(Mf[k]), hs.append(r[k])
        else:
            Gs.append(-Mf[k]), hs.append(-r[k])
    for p, j in enumerate(free):
        e = np.zeros(nf)
        e[p] = 1.0
        if math.isfinite(ub[j]):
            Gs.append(e), hs.append(ub[j])
        if math.isfinite(lb[j]):
            Gs.append(-e), hs.append(-lb[j])
    G = np.array(Gs).reshape(-1, nf)
    h = np.array(hs, dtype=float)
    h = h - G @ x0
    G = G @ N

    cones = []
    for cone in prog.cones:
        def lift(aff):
            v = np.zeros(n)
            for i, cf in aff.coeffs:
                v[i] += cf
            return v[free] @ N, aff.const + v @ xfix + v[free] @ x0
        a, a0 = lift(cone.head)
        rows = [lift(bd) for bd in cone.body]
        B = np.array([r_[0] for r_ in rows]).reshape(len(rows), N.shape[1])
        bb = np.array([r_[1] for r_ in rows], dtype=float)
        cones.append((a, a0, B, bb))

    c_full = prog.c
    c = c_full[free] @ N
    c0 = prog.objective_constant + c_full @ xfix + c_full[free] @ x0
    return _Reduced(free, xfix, x0, N, G, h, cones, c, c0)


def _drop_constant(G, h, cones, tol):
    keep = np.linalg.norm(G, axis=1) > 1e-12 if G.size else np.zeros(0, dtype=bool)
    if np.any(h[~keep] < -tol * np.maximum(1.0, np.abs(h[~keep]))):
        raise _Infeasible
    kept = []
    for a, a0, B, b in cones:
        if np.linalg.norm(a) <= 1e-12 and (B.size == 0 or np.abs(B).max() <= 1e-12):
            if np.linalg.norm(b) - a0 > tol * max(1.0, abs(a0)):
                raise _Infeasible
            continue
        kept.append((a, a0, B, b))
    return G[keep], h[keep], kept


class _Barrier:
    """Barrier for ``G z <= h`` and ``||B z + b|| <= a z + a0``."""

    def __init__(self, G, h, cones):
        self.G, self.h, self.cones = G, h, cones
        self.theta = G.shape[0] + 2 * len(cones)

    def inside(self, z) -> bool:
        if self.G.shape[0] and np.any(self.h - self.G @ z <= 0):
            return False
        for a, a0, B, b in self.cones:
            t = a @ z + a0
            u = B @ z + b
            if t <= 0 or t * t - u @ u <= 0:
                return False
        return True

    def value(self, z) -> float:
        val = 0.0
        if self.G.shape[0]:
            val -= np.sum(np.log(self.h - self.G @ z))
        for a, a0, B, b in self.cones:
            t = a @ z + a0
            u = B @ z + b
            val -= math.log(t * t - u @ u)
        return val

    def derivatives(self, z):
        n = z.size
        g = np.zeros(n)
        H = np.zeros((n, n))
        if self.G.shape[0]:
            s = self.h - self.G @ z
            g += self.G.T @ (1.0 / s)
            Gs = self.G / s[:, None]
            H += Gs.T @ Gs
        for a, a0, B, b in self.cones:
            t = a @ z + a0
            u = B @ z + b
            q = t * t - u @ u
            J = np.vstack([a, B])
            grad_tu = np.concatenate([[-2 * t / q], 2 * u / q])
            dg = np.concatenate([[2 * t], -2 * u])
            D = np.eye(1 + u.size)
            D[1:, 1:] *= -1
            H_tu = np.outer(dg, dg) / (q * q) - (2.0 / q) * D
            g += J.T @ grad_tu
            H += J.T @ H_tu @ J
        return g, H


def _newton_path(c, bar: _Barrier, z, gap_tol, stop=None, max_newton=80, t0=1.0, mu=10.0):
    """Follow the central path from the interior point ``z``; returns the final point."""
    t = t0
    for _ in range(60):
        for _ in range(max_newton):
            g, H = bar.derivatives(z)
            grad = t * c + g
            try:
                dz = -np.linalg.solve(H + 1e-14 * np.eye(z.size), grad)
            except np.linalg.LinAlgError:
                dz = -np.linalg.lstsq(H, grad, rcond=None)[0]
            lam2 = -grad @ dz
            if lam2 / 2 <= 1e-11:
                break
            f0 = t * (c @ z) + bar.value(z)
            step = 1.0
            while step > 1e-14:
                zn = z + step * dz
                if bar.inside(zn) and t * (c @ zn) + bar.value(zn) <= f0 - 0.25 * step * lam2:
                    break
                step *= 0.5
            else:
                break
            z = zn
            if stop is not None and stop(z):
                return z
        if bar.theta / t <= gap_tol:
            return z
        t *= mu
    return z


class DenseBarrierSolver:
    """Reference :class:`ConicSubproblemSolver` for programs with up to 200 variables."""

    def __init__(self, gap_tol: float = 1e-10, tol: float = 1e-9):
        self.gap_tol = gap_tol
        self.tol = tol

    def solve(self, prog: ConicProgram, lb=None, ub=None, tight: bool = False) -> SubResult:
        if prog.n > MAX_VARIABLES:
            raise ValueError(f"dense barrier solver limited to {MAX_VARIABLES} variables, got {prog.n}")
        lb = prog.lb if lb is None else np.asarray(lb, dtype=float)
        ub = prog.ub if ub is None else np.asarray(ub, dtype=float)
        if np.any(lb > ub + 1e-12):
            return SubResult(Status.INFEASIBLE)
        gap = self.gap_tol * (1e-2 if tight else 1.0)
        try:
            red = _reduce(prog, lb, ub, self.tol)
            G, h, cones = _drop_constant(red.G, red.h, red.cones, self.tol)
        except _Infeasible:
            return SubResult(Status.INFEASIBLE)
        k = red.N.shape[1]
        if k == 0 or (G.shape[0] == 0 and not cones and not np.any(red.c)):
            z = np.zeros(k)
        else:
            z = self._phase_one(G, h, cones, k)
            if z is None:
                return SubResult(Status.INFEASIBLE)
            if isinstance(z, tuple):
                # no strict interior: solve over the set widened by half the tolerance
                relax = 0.5 * FEASIBILITY_TOL
                h = h + relax * np.maximum(1.0, np.abs(h))
                cones = [(a, a0 + relax * max(1.0, abs(a0)), B, b) for a, a0, B, b in cones]
                z = self._phase_one(G, h, cones, k)
                if z is None or isinstance(z, tuple):
                    return SubResult(Status.NUMERICAL_FAILURE)
            scale = max(1.0, float(np.abs(red.c).max(initial=0.0)))
            bar = _Barrier(G, h, cones)
            z = _newton_path(red.c / scale, bar, z, gap)
        x = red.xfix.copy()
        x[red.free] = red.x0 + red.N @ z
        if prog.max_violation(x, lb, ub) > FEASIBILITY_TOL:
            return SubResult(Status.NUMERICAL_FAILURE, x=x, objective=prog.objective_value(x))
        return SubResult(Status.OPTIMAL, x=x, objective=prog.objective_value(x))

    def _phase_one(self, G, h, cones, k):
        """Interior point of the reduced set, ``None`` if empty, a 1-tuple if only the boundary is feasible."""
        z0 = np.zeros(k)
        viol = [0.0]
        if G.shape[0]:
            viol.append(float(np.max(G @ z0 - h)))
        for a, a0, B, b in cones:
            viol.append(float(np.linalg.norm(B @ z0 + b) - (a @ z0 + a0)))
        sigma0 = max(viol) + 1.0
        if sigma0 < 0:
            return z0
        # variables (z, sigma); sigma >= -1 keeps the problem bounded
        Gp = np.hstack([G, -np.ones((G.shape[0], 1))]) if G.shape[0] else np.zeros((0, k + 1))
        Gp = np.vstack([Gp, np.concatenate([np.zeros(k), [-1.0]])])
        hp = np.concatenate([h, [1.0]])
        conesp = [(np.concatenate([a, [1.0]]), a0, np.hstack([B, np.zeros((B.shape[0], 1))]), b)
                  for a, a0, B, b in cones]
        bar = _Barrier(Gp, hp, conesp)
        cp = np.zeros(k + 1)
        cp[-1] = 1.0
        margin = 1e-3
        zp = _newton_path(cp, bar, np.concatenate([z0, [sigma0]]), 1e-12,
                          stop=lambda zz: zz[-1] < -margin)
        sigma = zp[-1]
        scale = max(1.0, float(np.abs(h).max(initial=0.0)))
        if sigma < 0:
            return zp[:-1]
        if sigma > self.tol * scale:
            return None
        return (zp[:-1],)
