"""Physics checks on solved plans: conic exactness, exact branch-flow re-solve, battery audit."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

from .core import PowerGrid, ValidationError

EXACTNESS_TOL = 1e-5
VOLTAGE_MATCH_TOL = 1e-4
BATTERY_TOL_KWH = 1e-6


class SweepDiverged(ValidationError):
    pass


@dataclass
class GridState:
    """Squared voltages per node and branch flows keyed by ``(from, to)``, all per-unit."""

    v: dict[str, float]
    P: dict[tuple[str, str], float]
    Q: dict[tuple[str, str], float]
    l: dict[tuple[str, str], float]
    iterations: int = 0
    residual: float = 0.0


def _state_of(sol) -> GridState:
    return sol if isinstance(sol, GridState) else sol.grid_state


def exactness_residuals(state: GridState, grid: PowerGrid) -> dict[tuple[str, str], float]:
    """``rho = l * v_from - (P^2 + Q^2)`` per branch; zero when the relaxation is tight."""
    return {b.key: state.l[b.key] * state.v[b.from_id] - (state.P[b.key] ** 2 + state.Q[b.key] ** 2)
            for b in grid.branches}


def exactness_check(sol, grid: PowerGrid, tol: float = EXACTNESS_TOL) -> tuple[dict, list]:
    """Residuals per branch and the branches whose residual exceeds ``tol``."""
    rho = exactness_residuals(_state_of(sol), grid)
    flagged = [k for k, r in rho.items() if r > tol]
    return rho, flagged


def exact_distflow_resolve(grid: PowerGrid, injections: Mapping[str, float] | None = None,
                           tol: float = 1e-10, max_iter: int = 200) -> GridState:
    """Exact branch flow by backward/forward sweep from a flat start.

    ``injections`` adds real demand (per-unit) at nodes on top of their base
    load, e.g. charging load. Raises :class:`SweepDiverged` if the update
    norm does not fall below ``tol`` within ``max_iter`` sweeps.
    """
    inj = dict(injections or {})
    order = grid.bfs_order()
    v = {n: grid.v_slack_sq_pu for n in order}
    l = {b.key: 0.0 for b in grid.branches}
    P = {b.key: 0.0 for b in grid.branches}
    Q = {b.key: 0.0 for b in grid.branches}
    nodes = {n.id: n for n in grid.nodes}
    residual = math.inf
    for it in range(1, max_iter + 1):
        # backward: sending-end flows from leaves to the slack
        for nid in reversed(order[1:]):
            br = grid.parent_branch(nid)
            kids = grid.children(nid)
            p = nodes[nid].load_p_pu + inj.get(nid, 0.0) + sum(P[c.key] for c in kids)
            q = nodes[nid].load_q_pu + sum(Q[c.key] for c in kids)
            P[br.key] = p + br.r_pu * l[br.key]
            Q[br.key] = q + br.x_pu * l[br.key]
        new_v = {grid.slack_id: grid.v_slack_sq_pu}
        new_l = {}
        for nid in order[1:]:
            br = grid.parent_branch(nid)
            vi = new_v[br.from_id]
            try:
                new_l[br.key] = (P[br.key] ** 2 + Q[br.key] ** 2) / vi
                new_v[nid] = vi - 2 * (br.r_pu * P[br.key] + br.x_pu * Q[br.key]) + \
                    (br.r_pu ** 2 + br.x_pu ** 2) * new_l[br.key]
            except OverflowError:
                raise SweepDiverged(f"sweep diverged: flows overflow at node {nid} after {it} iterations") from None
            if not new_v[nid] > 0 or not math.isfinite(new_v[nid]):
                raise SweepDiverged(f"sweep diverged: non-positive voltage at node {nid} after {it} iterations")
        residual = max([abs(new_v[n] - v[n]) for n in order] + [abs(new_l[k] - l[k]) for k in l] + [0.0])
        v, l = new_v, new_l
        if residual <= tol:
            # one more backward pass so flows are consistent with the final currents
            for nid in reversed(order[1:]):
                br = grid.parent_branch(nid)
                kids = grid.children(nid)
                P[br.key] = nodes[nid].load_p_pu + inj.get(nid, 0.0) + sum(P[c.key] for c in kids) + \
                    br.r_pu * l[br.key]
                Q[br.key] = nodes[nid].load_q_pu + sum(Q[c.key] for c in kids) + br.x_pu * l[br.key]
            return GridState(v, dict(P), dict(Q), l, it, residual)
    raise SweepDiverged(f"sweep diverged: residual {residual:.3e} after {max_iter} iterations")


def balance_residual(state: GridState, grid: PowerGrid, injections: Mapping[str, float] | None = None) -> float:
    """Largest nodal real/reactive power mismatch of a grid state."""
    inj = dict(injections or {})
    worst = 0.0
    for n in grid.nodes:
        if n.id == grid.slack_id:
            continue
        br = grid.parent_branch(n.id)
        kids = grid.children(n.id)
        dp = state.P[br.key] - br.r_pu * state.l[br.key] - sum(state.P[c.key] for c in kids) - \
            n.load_p_pu - inj.get(n.id, 0.0)
        dq = state.Q[br.key] - br.x_pu * state.l[br.key] - sum(state.Q[c.key] for c in kids) - n.load_q_pu
        worst = max(worst, abs(dp), abs(dq))
    return worst


def voltage_violation(state: GridState, grid: PowerGrid) -> float:
    """Largest excursion of squared voltage outside node limits (0 when within)."""
    worst = 0.0
    for n in grid.nodes:
        if n.id == grid.slack_id:
            continue
        val = state.v[n.id]
        worst = max(worst, n.vmin_sq_pu - val, val - n.vmax_sq_pu)
    return worst


def battery_audit(sol, inst, tol_kwh: float = BATTERY_TOL_KWH) -> list[str]:
    """Replay every electrified route's energy from its departure SOC and the charge amounts.

    Flags deviations from the solver's energies, SOC outside the safe band,
    charges above the per-stop supply limit and charging at unbuilt stations.
    """
    b = inst.battery
    built = {st.stop_id for st in sol.stations}
    out = []
    routes = {r.id: r for r in inst.routes}
    for rp in sol.routes:
        if not rp.electrified:
            continue
        r = routes[rp.route_id]
        u = r.battery_kwh
        lo, hi = b.soc_min * u, b.soc_max * u
        e = b.soc_init * u
        for k, stop in enumerate(rp.stop_ids):
            if abs(rp.energy_kwh[k] - e) > tol_kwh:
                out.append(f"route {r.id} position {rp.positions[k]} ({stop}): solver energy "
                           f"{rp.energy_kwh[k]:.6f} kWh, replay {e:.6f} kWh")
            s = rp.charge_kwh[k]
            if e < lo - tol_kwh:
                out.append(f"route {r.id} position {rp.positions[k]} ({stop}): SOC {e / u:.6f} below {b.soc_min}")
            if e + s > hi + tol_kwh:
                out.append(f"route {r.id} position {rp.positions[k]} ({stop}): SOC {(e + s) / u:.6f} "
                           f"above {b.soc_max}")
            if s > tol_kwh:
                cap = r.charger_kw * rp.dwell_hours[k]
                if s > cap + tol_kwh:
                    out.append(f"route {r.id} position {rp.positions[k]} ({stop}): charge {s:.6f} kWh "
                               f"exceeds supply limit {cap:.6f} kWh")
                if stop not in built:
                    out.append(f"route {r.id} charges at {stop} where no station is built")
            if k < len(rp.link_miles):
                e = e + s - r.consumption_kwh_per_mile * rp.link_miles[k]
    return out


@dataclass
class ValidationReport:
    residuals: dict[tuple[str, str], float]
    flagged_branches: list[tuple[str, str]]
    max_voltage_violation: float
    battery_violations: list[str]
    voltage_deltas: dict[str, float] = field(default_factory=dict)
    resolve_error: str | None = None
    exactness_tol: float = EXACTNESS_TOL
    voltage_tol: float = VOLTAGE_MATCH_TOL

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    @property
    def min_residual(self) -> float:
        return min(self.residuals.values(), default=0.0)

    @property
    def max_voltage_delta(self) -> float:
        return max((abs(d) for d in self.voltage_deltas.values()), default=0.0)

    @property
    def passed(self) -> bool:
        return (not self.flagged_branches and self.min_residual >= -1e-7 and self.max_voltage_violation <= 1e-7
                and not self.battery_violations and self.resolve_error is None
                and self.max_voltage_delta <= self.voltage_tol)

    def record(self) -> dict:
        return {
            "passed": self.passed,
            "max_exactness_residual": self.max_residual,
            "min_exactness_residual": self.min_residual,
            "flagged_branches": ["-".join(k) for k in self.flagged_branches],
            "max_voltage_violation": self.max_voltage_violation,
            "max_voltage_delta": self.max_voltage_delta,
            "battery_violations": list(self.battery_violations),
            "resolve_error": self.resolve_error,
            "residuals": {"-".join(k): r for k, r in self.residuals.items()},
            "voltage_deltas": dict(self.voltage_deltas),
        }

    def to_json(self) -> str:
        return json.dumps(self.record(), indent=2)

    def to_text(self) -> str:
        lines = [f"validation: {'PASS' if self.passed else 'FAIL'}",
                 f"  exactness residual max {self.max_residual:.3e} pu^2 (tol {self.exactness_tol:g}), "
                 f"min {self.min_residual:.3e}",
                 f"  flagged branches: {', '.join('-'.join(k) for k in self.flagged_branches) or 'none'}",
                 f"  voltage limit violation: {self.max_voltage_violation:.3e} pu^2",
                 f"  exact re-solve max |dv|: {self.max_voltage_delta:.3e} pu^2 (tol {self.voltage_tol:g})"]
        if self.resolve_error:
            lines.append(f"  exact re-solve failed: {self.resolve_error}")
        lines.append(f"  battery violations: {len(self.battery_violations)}")
        lines.extend(f"    {msg}" for msg in self.battery_violations)
        return "\n".join(lines) + "\n"


def validate_solution(sol, inst, exactness_tol: float = EXACTNESS_TOL,
                      voltage_tol: float = VOLTAGE_MATCH_TOL) -> ValidationReport:
    grid = inst.grid
    state = _state_of(sol)
    rho, flagged = exactness_check(state, grid, exactness_tol)
    deltas, err = {}, None
    try:
        exact = exact_distflow_resolve(grid, sol.charging_load_pu)
        deltas = {n: state.v[n] - exact.v[n] for n in exact.v}
        vviol = voltage_violation(exact, grid)
    except SweepDiverged as exc:
        err = str(exc)
        vviol = voltage_violation(state, grid)
    return ValidationReport(rho, flagged, max(0.0, vviol), battery_audit(sol, inst), deltas, err,
                            exactness_tol, voltage_tol)
