"""Solve planning instances and turn solver vectors into station, route and cost tables."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import BatteryPolicy, BusRoute, ValidationError, natural_key
from .fairness import jain_index, zone_ratios
from .instance import PlanningInstance
from .model import VariableMap, build_program, loss_cost_per_unit
from .model.program import ConicProgram
from .solver import BnBConfig, ClarabelSolver, SolveResult, Status, branch_and_bound
from .validate import GridState

log = logging.getLogger(__name__)

CHARGE_EVENT_KWH = 1e-6


def min_charges_oracle(route: BusRoute, policy: BatteryPolicy) -> int:
    """Fewest full-power charges that let ``route`` finish its round trip above the SOC floor.

    ``ceil(max(0, E_trip - (theta0 - theta_l) * u) / (P * tau))``, with the
    largest per-stop charge as ``P * tau``.
    """
    per_charge = max(route.charge_per_stop_kwh[:-1], default=0.0)
    if not per_charge > 0:
        raise ValidationError(f"route {route.id}: per-charge energy must be positive")
    need = max(0.0, route.trip_energy_kwh - (policy.soc_init - policy.soc_min) * route.battery_kwh)
    count = math.ceil(need / per_charge)
    if count > len(route.stops) - 1:
        raise ValidationError(f"route {route.id} is infeasible even with charging at every stop "
                              f"({count} charges needed, {len(route.stops) - 1} stops)")
    return count


@dataclass(frozen=True)
class CostBreakdown:
    station: float
    pile: float
    line: float
    loss: float

    @property
    def total(self) -> float:
        return self.station + self.pile + self.line + self.loss

    def as_rows(self) -> list[tuple[str, float]]:
        return [("station", self.station), ("pile", self.pile), ("line", self.line), ("loss", self.loss),
                ("total", self.total)]


@dataclass(frozen=True)
class StationPlan:
    stop_id: str
    piles: int
    power_node: str
    line_miles: float
    line_cost: float


@dataclass(frozen=True)
class RoutePlan:
    route_id: str
    electrified: bool
    positions: tuple[int, ...]
    stop_ids: tuple[str, ...]
    energy_kwh: tuple[float, ...]
    charge_kwh: tuple[float, ...]
    link_miles: tuple[float, ...]
    dwell_hours: tuple[float, ...]

    @property
    def charge_events(self) -> int:
        return sum(1 for s in self.charge_kwh if s > CHARGE_EVENT_KWH)

    @property
    def charged_kwh(self) -> float:
        return math.fsum(self.charge_kwh)


@dataclass
class PlanSolution:
    objective: float
    breakdown: CostBreakdown
    stations: list[StationPlan]
    routes: list[RoutePlan]
    grid_state: GridState
    charging_load_pu: dict[str, float]
    zone_ratios: dict[str, float] | None = None
    solver_w: dict[str, float] | None = None
    jain: float | None = None
    eta: float | None = None
    solve: dict = field(default_factory=dict)

    @property
    def station_count(self) -> int:
        return len(self.stations)

    @property
    def pile_count(self) -> int:
        return sum(s.piles for s in self.stations)

    @property
    def electrified_routes(self) -> list[str]:
        return [r.route_id for r in self.routes if r.electrified]


def cost_breakdown(inst: PlanningInstance, stations: int, piles: int, line_cost: float, loss_cost: float) -> CostBreakdown:
    econ = inst.econ
    return CostBreakdown(econ.station_cost * stations, econ.pile_cost * piles, line_cost, loss_cost)


def clean_point(prog: ConicProgram, x: np.ndarray, vm: VariableMap) -> np.ndarray:
    """Round the integer-valued symbols (also those declared continuous but integral by construction)."""
    x = np.array(x, dtype=float)
    idx = set(int(i) for i in prog.integer_indices)
    for group in (vm.X, vm.beta, vm.y, vm.psi, vm.Y, vm.I):
        idx.update(group.values())
    for i in idx:
        x[i] = float(round(x[i]))
    return x


def decode(inst: PlanningInstance, prog: ConicProgram, vm: VariableMap, x: np.ndarray) -> PlanSolution:
    x = clean_point(prog, x, vm)
    cp_by_key = {(c.power_node_id, c.stop_id): c for c in inst.couplings}
    stations = []
    line_cost = 0.0
    for m in inst.candidates:
        if x[vm.X[m]] < 0.5:
            continue
        chosen = [key for key, i in vm.psi.items() if key[1] == m and x[i] > 0.5]
        if len(chosen) != 1:
            raise ValidationError(f"station {m} coupled to {len(chosen)} power nodes")
        cp = cp_by_key[chosen[0]]
        line_cost += cp.line_cost_usd
        stations.append(StationPlan(m, int(x[vm.beta[m]]), cp.power_node_id, cp.line_miles, cp.line_cost_usd))
    k = loss_cost_per_unit(inst)
    loss = math.fsum(k * br.r_pu * x[vm.l[br.key]] for br in inst.grid.branches)
    bd = cost_breakdown(inst, len(stations), sum(s.piles for s in stations), line_cost, loss)

    routes = []
    for r in inst.routes:
        seg = vm.segments[r.id]
        on = bool(x[vm.I[r.id]] > 0.5) if vm.fairness else True
        n = len(seg.positions)
        e = tuple(float(x[vm.e[(r.id, j)]]) for j in range(n))
        s = tuple(float(x[vm.s[(r.id, j)]]) if (r.id, j) in vm.s else 0.0 for j in range(n))
        routes.append(RoutePlan(r.id, on, seg.positions, seg.stop_ids, e, s, seg.link_miles, seg.dwell_hours))

    state = GridState({nid: float(x[i]) for nid, i in vm.v.items()},
                      {k_: float(x[i]) for k_, i in vm.P.items()},
                      {k_: float(x[i]) for k_, i in vm.Q.items()},
                      {k_: float(x[i]) for k_, i in vm.l.items()})
    load: dict[str, float] = {}
    kw = {r.id: r.charger_kw for r in inst.routes}
    for (rid, m, i), j in vm.Y.items():
        if x[j] > 0.5:
            load[i] = load.get(i, 0.0) + kw[rid] / inst.grid.base_kw

    sol = PlanSolution(bd.total, bd, stations, routes, state, load)
    if vm.fairness:
        part = inst.fairness.partition
        sol.zone_ratios = zone_ratios(sol.electrified_routes, inst.network, part)
        sol.solver_w = {z: float(x[i]) for z, i in vm.w.items()}
        vals = list(sol.solver_w.values())
        sol.jain = jain_index(vals, part.zone_count) if any(v > 0 for v in vals) else None
        sol.eta = inst.fairness.eta
    return sol


@dataclass
class PlanOutcome:
    status: Status
    solution: PlanSolution | None
    result: SolveResult
    program: ConicProgram
    variables: VariableMap
    message: str = ""


def solve_plan(inst: PlanningInstance, bnb: BnBConfig | None = None, sub=None, fairness: bool | None = None,
               implied_integrality: bool = True) -> PlanOutcome:
    """Assemble, branch and bound, decode."""
    prog, vm = build_program(inst, fairness=fairness, implied_integrality=implied_integrality)
    sub = sub or ClarabelSolver()
    res = branch_and_bound(prog, sub, bnb or BnBConfig())
    sol = None
    if res.x is not None:
        sol = decode(inst, prog, vm, res.x)
        sol.solve = res.record()
    msg = {Status.INFEASIBLE: "model infeasible (structural checks passed; no plan satisfies all rows)",
           Status.NUMERICAL_FAILURE: "relaxations failed numerically; no certified plan",
           Status.BOUND_LIMIT: "search stopped at the node or time limit"}.get(res.status, "")
    return PlanOutcome(res.status, sol, res, prog, vm, msg)


def charge_lower_bound_holds(inst: PlanningInstance, sol: PlanSolution) -> list[str]:
    """Routes whose plan uses fewer charge events than :func:`min_charges_oracle` allows."""
    bad = []
    routes = {r.id: r for r in inst.routes}
    for rp in sol.routes:
        if rp.electrified and rp.charge_events < min_charges_oracle(routes[rp.route_id], inst.battery):
            bad.append(rp.route_id)
    return bad


def fairness_consistency(sol: PlanSolution, tol: float = 1e-8) -> float:
    """Largest gap between solver zone ratios and those recomputed from the decoded routes."""
    if sol.zone_ratios is None:
        return 0.0
    return max(abs(sol.solver_w[z] - sol.zone_ratios[z]) for z in sol.zone_ratios)


def station_rows(sol: PlanSolution) -> list[dict]:
    return [{"stop_id": s.stop_id, "piles": s.piles, "power_node": s.power_node,
             "line_miles": s.line_miles, "line_cost": s.line_cost}
            for s in sorted(sol.stations, key=lambda s: natural_key(s.stop_id))]


def route_charge_rows(sol: PlanSolution) -> list[dict]:
    out = []
    for rp in sol.routes:
        for k, stop in enumerate(rp.stop_ids):
            out.append({"route_id": rp.route_id, "electrified": int(rp.electrified), "position": rp.positions[k],
                        "stop_id": stop, "energy_kwh": rp.energy_kwh[k], "charge_kwh": rp.charge_kwh[k]})
    return out
