"""Assembly of the siting/sizing MISOCP from a :class:`PlanningInstance`."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field

from ..core import ValidationError
from ..fairness import zone_route_shares
from ..instance import PlanningInstance, RouteSegments
from .program import Affine, ConicProgram, ProgramBuilder, VarKind

log = logging.getLogger(__name__)


def _tag(*parts) -> str:
    return ",".join(re.sub(r"\s+", "_", str(p)) for p in parts)


@dataclass
class VariableMap:
    """Handles (variable indices) of every model symbol, keyed by its index set."""

    X: dict[str, int] = field(default_factory=dict)
    beta: dict[str, int] = field(default_factory=dict)
    y: dict[tuple[str, str], int] = field(default_factory=dict)
    psi: dict[tuple[str, str], int] = field(default_factory=dict)  # (power node, stop)
    Y: dict[tuple[str, str, str], int] = field(default_factory=dict)  # (route, stop, power node)
    I: dict[str, int] = field(default_factory=dict)
    e: dict[tuple[str, int], int] = field(default_factory=dict)  # (route, kept position)
    s: dict[tuple[str, int], int] = field(default_factory=dict)
    P: dict[tuple[str, str], int] = field(default_factory=dict)
    Q: dict[tuple[str, str], int] = field(default_factory=dict)
    l: dict[tuple[str, str], int] = field(default_factory=dict)
    v: dict[str, int] = field(default_factory=dict)
    w: dict[str, int] = field(default_factory=dict)
    segments: dict[str, RouteSegments] = field(default_factory=dict)
    fairness: bool = False


def create_variables(inst: PlanningInstance, pb: ProgramBuilder, fairness: bool = False,
                     implied_integrality: bool = True) -> VariableMap:
    """Declare all variables with their bounds and integrality marks.

    With ``implied_integrality`` the station, pile, product and route
    indicators are declared continuous: given binary ``y`` and ``Psi`` the rows
    force ``X`` and ``Y`` (and ``I``) integral, and the positive pile cost
    drives ``beta`` to the integer ``sum(y)`` at any optimum.
    """
    vm = VariableMap(fairness=fairness, segments=inst.segments())
    b = inst.battery
    kind_implied = VarKind.CONTINUOUS if implied_integrality else None
    for m in inst.candidates:
        vm.X[m] = pb.add_var(f"X[{_tag(m)}]", 0, 1, kind_implied or VarKind.BINARY)
        vm.beta[m] = pb.add_var(f"beta[{_tag(m)}]", 0, b.big_m, kind_implied or VarKind.INTEGER)
    for c in sorted(inst.couplings, key=lambda c: (inst.candidates.index(c.stop_id), c.power_node_id)):
        vm.psi[(c.power_node_id, c.stop_id)] = pb.add_var(f"Psi[{_tag(c.power_node_id, c.stop_id)}]", 0, 1,
                                                          VarKind.BINARY)
    for r in inst.routes:
        seg = vm.segments[r.id]
        for m in seg.charge_stops():
            vm.y[(r.id, m)] = pb.add_var(f"y[{_tag(r.id, m)}]", 0, 1, VarKind.BINARY)
    for (rid, m) in list(vm.y):
        for c in inst.couplings_of(m):
            vm.Y[(rid, m, c.power_node_id)] = pb.add_var(f"Yaux[{_tag(rid, m, c.power_node_id)}]", 0, 1,
                                                         kind_implied or VarKind.BINARY)
    if fairness:
        for r in inst.routes:
            vm.I[r.id] = pb.add_var(f"I[{_tag(r.id)}]", 0, 1, kind_implied or VarKind.BINARY)
    for r in inst.routes:
        seg = vm.segments[r.id]
        cap = b.soc_max * r.battery_kwh
        for k in range(len(seg.positions)):
            vm.e[(r.id, k)] = pb.add_var(f"e[{_tag(r.id, k)}]", 0, cap)
            if seg.chargeable[k]:
                vm.s[(r.id, k)] = pb.add_var(f"s[{_tag(r.id, k)}]", 0, cap)
    _grid_variables(inst.grid, pb, vm)
    if fairness:
        for z in inst.fairness.partition.zone_names:
            vm.w[z] = pb.add_var(f"w[{_tag(z)}]", 0, 1)
    return vm


def loss_cost_per_unit(inst: PlanningInstance) -> float:
    """Dollars per unit of ``r * l`` (per-unit power) over the planning horizon."""
    return inst.econ.loss_hours_total * inst.econ.electricity_price * inst.grid.base_kw


def build_objective(inst: PlanningInstance, vm: VariableMap) -> dict[int, float]:
    if not inst.couplings:
        raise ValidationError("no coupling candidates: stations cannot be connected to the grid")
    econ = inst.econ
    coef: dict[int, float] = {}
    for m in inst.candidates:
        coef[vm.X[m]] = econ.station_cost
        coef[vm.beta[m]] = econ.pile_cost
    for c in inst.couplings:
        coef[vm.psi[(c.power_node_id, c.stop_id)]] = c.line_cost_usd
    k = loss_cost_per_unit(inst)
    for br in inst.grid.branches:
        coef[vm.l[br.key]] = k * br.r_pu
    return coef


def add_siting_constraints(inst: PlanningInstance, vm: VariableMap, pb: ProgramBuilder) -> list[int]:
    rows = []
    M = inst.battery.big_m
    for (rid, m), yi in vm.y.items():
        rows.append(pb.add_row(f"charge_needs_station[{_tag(rid, m)}]", [(yi, 1.0), (vm.X[m], -1.0)], "<=", 0.0))
    for m in inst.candidates:
        rows.append(pb.add_row(f"piles_need_station[{_tag(m)}]", [(vm.beta[m], 1.0), (vm.X[m], -M)], "<=", 0.0))
        ys = [(yi, 1.0) for (rid, mm), yi in vm.y.items() if mm == m]
        rows.append(pb.add_row(f"dedicated_piles[{_tag(m)}]", ys + [(vm.beta[m], -1.0)], "<=", 0.0))
        psis = [(pi, 1.0) for (i, mm), pi in vm.psi.items() if mm == m]
        rows.append(pb.add_row(f"station_coupled[{_tag(m)}]", psis + [(vm.X[m], -1.0)], "==", 0.0))
    return [r for r in rows if r is not None]


def add_energy_constraints(inst: PlanningInstance, vm: VariableMap, pb: ProgramBuilder,
                           fairness: bool = False) -> list[int]:
    """Battery bounds, energy conservation and per-stop supply limits per route.

    In the fairness variant every battery term is scaled by the route's
    indicator, so an unselected route carries zero energy.
    """
    b = inst.battery
    rows = []
    for r in inst.routes:
        seg = vm.segments[r.id]
        u = r.battery_kwh
        Ii = vm.I.get(r.id) if fairness else None

        def scaled(coeffs, rhs_amount):
            # move "rhs_amount * I" to the left when the route indicator is present
            if Ii is None:
                return list(coeffs), rhs_amount
            return list(coeffs) + [(Ii, -rhs_amount)], 0.0

        co, rhs = scaled([(vm.e[(r.id, 0)], 1.0)], b.soc_init * u)
        rows.append(pb.add_row(f"origin_energy[{_tag(r.id)}]", co, "==", rhs))
        for k in range(len(seg.positions)):
            ek = vm.e[(r.id, k)]
            co, rhs = scaled([(ek, 1.0)], b.soc_min * u)
            rows.append(pb.add_row(f"soc_floor[{_tag(r.id, k)}]", co, ">=", rhs))
            top = [(ek, 1.0)]
            if (r.id, k) in vm.s:
                top.append((vm.s[(r.id, k)], 1.0))
            co, rhs = scaled(top, b.soc_max * u)
            rows.append(pb.add_row(f"soc_ceiling[{_tag(r.id, k)}]", co, "<=", rhs))
            if (r.id, k) in vm.s:
                yi = vm.y[(r.id, seg.stop_ids[k])]
                cap = r.charger_kw * seg.dwell_hours[k]
                rows.append(pb.add_row(f"supply_limit[{_tag(r.id, k)}]", [(vm.s[(r.id, k)], 1.0), (yi, -cap)],
                                       "<=", 0.0))
        for k, miles in enumerate(seg.link_miles):
            # e[k+1] - e[k] - s[k] + e0*d*[I] = 0
            co = [(vm.e[(r.id, k + 1)], 1.0), (vm.e[(r.id, k)], -1.0)]
            if (r.id, k) in vm.s:
                co.append((vm.s[(r.id, k)], -1.0))
            use = r.consumption_kwh_per_mile * miles
            if Ii is None:
                rows.append(pb.add_row(f"energy_balance[{_tag(r.id, k)}]", co, "==", -use))
            else:
                rows.append(pb.add_row(f"energy_balance[{_tag(r.id, k)}]", co + [(Ii, use)], "==", 0.0))
    return [r for r in rows if r is not None]


def add_powerflow_constraints(inst: PlanningInstance, vm: VariableMap, pb: ProgramBuilder) -> list[int]:
    """Branch flow balance, voltage drop, conic current relaxation and the product linearization."""
    grid = inst.grid
    rows = []
    base_kw = grid.base_kw
    charging: dict[str, list[tuple[int, float]]] = {n.id: [] for n in grid.nodes}
    route_kw = {r.id: r.charger_kw for r in inst.routes}
    for (rid, m, i), Yi in vm.Y.items():
        charging[i].append((Yi, route_kw[rid] / base_kw))
        yi, pi = vm.y[(rid, m)], vm.psi[(i, m)]
        rows.append(pb.add_row(f"mc_y[{_tag(rid, m, i)}]", [(Yi, 1.0), (yi, -1.0)], "<=", 0.0))
        rows.append(pb.add_row(f"mc_psi[{_tag(rid, m, i)}]", [(Yi, 1.0), (pi, -1.0)], "<=", 0.0))
        rows.append(pb.add_row(f"mc_both[{_tag(rid, m, i)}]", [(Yi, 1.0), (yi, -1.0), (pi, -1.0)], ">=", -1.0))
    rows += _branch_flow_rows(grid, vm, pb, charging)
    return [r for r in rows if r is not None]


def _branch_flow_rows(grid, vm: VariableMap, pb: ProgramBuilder, charging, extra_p=None) -> list[int | None]:
    extra_p = extra_p or {}
    rows = []
    for n in grid.nodes:
        if n.id == grid.slack_id:
            continue
        parent = grid.parent_branch(n.id)
        kids = grid.children(n.id)
        # inflow net of losses equals outflow plus local demand
        p = [(vm.P[parent.key], 1.0), (vm.l[parent.key], -parent.r_pu)] + [(vm.P[c.key], -1.0) for c in kids]
        p += [(Yi, -coef) for Yi, coef in charging.get(n.id, ())]
        rows.append(pb.add_row(f"p_balance[{_tag(n.id)}]", p, "==", n.load_p_pu + extra_p.get(n.id, 0.0)))
        q = [(vm.Q[parent.key], 1.0), (vm.l[parent.key], -parent.x_pu)] + [(vm.Q[c.key], -1.0) for c in kids]
        rows.append(pb.add_row(f"q_balance[{_tag(n.id)}]", q, "==", n.load_q_pu))
    for br in grid.branches:
        k = br.key
        z2 = br.r_pu ** 2 + br.x_pu ** 2
        rows.append(pb.add_row(f"voltage_drop[{_tag(*k)}]",
                               [(vm.v[br.to_id], 1.0), (vm.v[br.from_id], -1.0), (vm.P[k], 2 * br.r_pu),
                                (vm.Q[k], 2 * br.x_pu), (vm.l[k], -z2)], "==", 0.0))
        li, vi = vm.l[k], vm.v[br.from_id]
        pb.add_cone(f"current_cone[{_tag(*k)}]", Affine(((li, 1.0), (vi, 1.0))),
                    (Affine(((vm.P[k], 2.0),)), Affine(((vm.Q[k], 2.0),)), Affine(((li, 1.0), (vi, -1.0)))))
    return rows


def _grid_variables(grid, pb: ProgramBuilder, vm: VariableMap) -> None:
    for br in grid.branches:
        key = br.key
        vm.P[key] = pb.add_var(f"P[{_tag(*key)}]", -math.inf, math.inf)
        vm.Q[key] = pb.add_var(f"Q[{_tag(*key)}]", -math.inf, math.inf)
        vm.l[key] = pb.add_var(f"l[{_tag(*key)}]", 0, br.current_sq_limit_pu)
    for n in grid.nodes:
        if n.id == grid.slack_id:
            vm.v[n.id] = pb.add_var(f"v[{_tag(n.id)}]", grid.v_slack_sq_pu, grid.v_slack_sq_pu)
        else:
            vm.v[n.id] = pb.add_var(f"v[{_tag(n.id)}]", n.vmin_sq_pu, n.vmax_sq_pu)


def grid_program(grid, extra_load_pu=None) -> tuple[ConicProgram, VariableMap]:
    """Relaxed branch flow alone: minimize total ``r * l`` under fixed nodal demand.

    ``extra_load_pu`` maps node id to additional real demand (e.g. charging)
    on top of the node's base load.
    """
    pb = ProgramBuilder()
    vm = VariableMap()
    _grid_variables(grid, pb, vm)
    for br in grid.branches:
        pb.add_objective(vm.l[br.key], br.r_pu)
    extra = dict(extra_load_pu or {})
    unknown = set(extra) - {n.id for n in grid.nodes}
    if unknown:
        raise ValidationError(f"unknown power node {sorted(unknown)[0]}")
    _branch_flow_rows(grid, vm, pb, {}, {k: float(p) for k, p in extra.items()})
    return pb.build(), vm


def add_fairness_constraints(inst: PlanningInstance, vm: VariableMap, pb: ProgramBuilder) -> list[int]:
    fs = inst.fairness
    part = fs.partition
    H = part.zone_count
    if fs.eta != 0 and not (1.0 / H - 1e-12 <= fs.eta <= 1.0):
        raise ValidationError("fairness level out of range")
    shares = zone_route_shares(inst.network, part)
    rows = []
    for z in part.zone_names:
        co = [(vm.w[z], 1.0)] + [(vm.I[rid], -shares[rid][z]) for rid in vm.I]
        rows.append(pb.add_row(f"zone_ratio[{_tag(z)}]", co, "==", 0.0))
    if fs.eta >= 1.0 - 1e-12:
        # index 1 means equal ratios; the cone would have no interior
        first = vm.w[part.zone_names[0]]
        for z in part.zone_names[1:]:
            rows.append(pb.add_row(f"equal_ratio[{_tag(z)}]", [(vm.w[z], 1.0), (first, -1.0)], "==", 0.0))
    elif fs.eta > 0:
        k = math.sqrt(1.0 / (H * fs.eta))
        pb.add_cone("fairness_cone", Affine(tuple((vm.w[z], k) for z in part.zone_names)),
                    tuple(Affine(((vm.w[z], 1.0),)) for z in part.zone_names))
    sense = "==" if fs.budget == "exact" else "<="
    rows.append(pb.add_row("route_budget", [(i, 1.0) for i in vm.I.values()], sense, float(fs.i_max)))
    for (rid, m), yi in vm.y.items():
        rows.append(pb.add_row(f"charge_needs_beb[{_tag(rid, m)}]", [(yi, 1.0), (vm.I[rid], -1.0)], "<=", 0.0))
    for rid, Ii in vm.I.items():
        ys = [(yi, -1.0) for (r2, _), yi in vm.y.items() if r2 == rid]
        rows.append(pb.add_row(f"beb_needs_charge[{_tag(rid)}]", [(Ii, 1.0)] + ys, "<=", 0.0))
    return [r for r in rows if r is not None]


def build_program(inst: PlanningInstance, fairness: bool | None = None,
                  implied_integrality: bool = True, check: bool = True) -> tuple[ConicProgram, VariableMap]:
    """Assemble the full program. ``fairness=None`` follows ``inst.fairness``."""
    if fairness is None:
        fairness = inst.fairness is not None
    if fairness and inst.fairness is None:
        raise ValidationError("fairness variant requested without fairness settings")
    if check:
        problems = inst.check_links(strict=not fairness)
        for msg in problems:
            log.warning("%s (route can only stay conventional)", msg)
    pb = ProgramBuilder()
    vm = create_variables(inst, pb, fairness, implied_integrality)
    for i, c in build_objective(inst, vm).items():
        pb.add_objective(i, c)
    add_siting_constraints(inst, vm, pb)
    add_energy_constraints(inst, vm, pb, fairness)
    add_powerflow_constraints(inst, vm, pb)
    if fairness:
        add_fairness_constraints(inst, vm, pb)
    return pb.build(), vm


def expected_counts(inst: PlanningInstance, fairness: bool = False) -> dict[str, int]:
    """Closed-form variable/row/cone counts of :func:`build_program`."""
    segs = inst.segments()
    C = len(inst.candidates)
    R = len(inst.routes)
    n_links = len(inst.grid.branches)
    n_nodes = len(inst.grid.nodes)
    kept = sum(len(s.positions) for s in segs.values())
    n_s = sum(sum(s.chargeable) for s in segs.values())
    n_y = sum(len(s.charge_stops()) for s in segs.values())
    n_Y = sum(len(inst.couplings_of(m)) for s in segs.values() for m in s.charge_stops())
    n_psi = len(inst.couplings)
    n_energy_links = sum(len(s.link_miles) for s in segs.values())
    H = inst.fairness.partition.zone_count if fairness else 0
    variables = 2 * C + n_psi + n_y + n_Y + kept + n_s + 3 * n_links + n_nodes
    rows = n_y + 3 * C + (R + 2 * kept + n_s + n_energy_links) + 3 * n_Y + 2 * (n_nodes - 1) + n_links
    cones = n_links
    if fairness:
        variables += R + H
        rows += H + 1 + n_y + R
        if inst.fairness.eta >= 1.0 - 1e-12:
            rows += H - 1
        elif inst.fairness.eta > 0:
            cones += 1
    return {"variables": variables, "rows": rows, "cones": cones}
