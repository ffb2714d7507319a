import itertools
import math

import numpy as np
import pytest

from busgrid.core import BatteryPolicy, ValidationError
from busgrid.fairness import ZonePartition
from busgrid.instance import FairnessSettings, InfeasibleInstance
from busgrid.model import (
    ConicProgram,
    ProgramBuilder,
    ProgramError,
    Sense,
    build_objective,
    build_program,
    create_variables,
    expected_counts,
    grid_program,
)
from busgrid.solver import BnBConfig, ClarabelSolver, Status, branch_and_bound
from busgrid.synthetic import mini_instance, two_node_feeder


def _row(prog: ConicProgram, name: str):
    (r,) = [r for r in prog.rows if r.name == name]
    return r


def _holds(row, vals: dict[int, float], tol=1e-12) -> bool:
    lhs = sum(c * vals.get(i, 0.0) for i, c in row.coeffs)
    return {Sense.LE: lhs <= row.rhs + tol, Sense.GE: lhs >= row.rhs - tol,
            Sense.EQ: abs(lhs - row.rhs) <= tol}[row.sense]


@pytest.fixture(scope="module")
def inst():
    return mini_instance(0)


@pytest.fixture(scope="module")
def built(inst):
    return build_program(inst)


@pytest.fixture(scope="module")
def solved(built):
    prog, vm = built
    res = branch_and_bound(prog, ClarabelSolver())
    assert res.status == Status.OPTIMAL
    return res


def test_investment_coefficients(inst, built):
    prog, vm = built
    x = np.zeros(prog.n)
    for m in inst.candidates[:3]:
        x[vm.X[m]] = 1.0
    x[vm.beta[inst.candidates[0]]] = 2.0
    x[vm.beta[inst.candidates[1]]] = 1.0
    x[vm.beta[inst.candidates[2]]] = 1.0
    assert prog.objective_value(x) == pytest.approx(600_000 + 100_000, abs=1e-9)


def test_zero_length_line_has_zero_coefficient(inst, built):
    prog, vm = built
    coef = dict(prog.objective)
    zero = [c for c in inst.couplings if c.line_miles == 0.0]
    assert zero
    for c in zero:
        assert coef.get(vm.psi[(c.power_node_id, c.stop_id)], 0.0) == 0.0
    paid = [c for c in inst.couplings if c.line_miles > 0]
    for c in paid:
        assert coef[vm.psi[(c.power_node_id, c.stop_id)]] == pytest.approx(390_000 * c.line_miles, rel=1e-12)


def test_loss_coefficient(inst, built):
    prog, vm = built
    coef = dict(prog.objective)
    for br in inst.grid.branches:
        want = 15 * 3650 * 0.20 * inst.grid.base_mva * 1000 * br.r_pu
        assert coef[vm.l[br.key]] == pytest.approx(want, rel=1e-12)
    # zero everywhere but the currents: no loss
    assert prog.objective_value(np.zeros(prog.n)) == 0.0


def test_missing_couplings(inst):
    bare = inst.replace(couplings=())
    with pytest.raises(ValidationError, match="coupling"):
        build_objective(bare, create_variables(bare, ProgramBuilder()))


@pytest.mark.parametrize("seed,eta", [(0, None), (1, None), (2, 0.6), (5, 0.6), (5, 1.0), (3, 0.0)])
def test_counts_match_closed_form(seed, eta):
    inst = mini_instance(seed, n_routes=2, fairness_eta=eta)
    fair = eta is not None
    prog, vm = build_program(inst)
    want = expected_counts(inst, fair)
    got = prog.counts()
    assert (got["variables"], got["rows"], got["cones"]) == (want["variables"], want["rows"], want["cones"])
    handles = [i for name in ("X", "beta", "y", "psi", "Y", "I", "e", "s", "P", "Q", "l", "v", "w")
               for i in getattr(vm, name).values()]
    assert sorted(handles) == list(range(prog.n))


def test_implied_integrality_marks(inst):
    lean, _ = build_program(inst)
    full, _ = build_program(inst, implied_integrality=False)
    assert lean.counts()["integer"] == 0
    assert full.counts()["integer"] == len(inst.candidates)
    assert lean.counts()["binary"] < full.counts()["binary"]


def test_station_gates_everything(inst, built, solved):
    prog, vm = built
    x = solved.x.copy()
    built_at = [m for m in inst.candidates if x[vm.X[m]] > 0.5]
    m = built_at[0]
    assert prog.max_violation(x) < 1e-6
    x[vm.X[m]] = 0.0
    assert prog.max_violation(x) > 0.5
    for (rid, mm), yi in vm.y.items():
        if mm == m:
            assert not _holds(_row(prog, f"charge_needs_station[{rid},{m}]"), {yi: 1.0, vm.X[m]: 0.0})
    assert not _holds(_row(prog, f"piles_need_station[{m}]"), {vm.beta[m]: 1.0, vm.X[m]: 0.0})


def test_two_routes_need_two_piles(inst, built):
    prog, vm = built
    shared = [m for m in inst.candidates if sum(1 for (_, mm) in vm.y if mm == m) >= 2]
    m = shared[0]
    row = _row(prog, f"dedicated_piles[{m}]")
    ys = {yi: 1.0 for (_, mm), yi in vm.y.items() if mm == m}
    assert not _holds(row, {**ys, vm.beta[m]: len(ys) - 1.0})
    assert _holds(row, {**ys, vm.beta[m]: float(len(ys))})


def test_pile_cap(inst, built):
    prog, vm = built
    for m in inst.candidates:
        assert prog.variables[vm.beta[m]].ub == 45
        row = _row(prog, f"piles_need_station[{m}]")
        assert dict(row.coeffs)[vm.X[m]] == -45


def test_supply_cap_30_kwh(inst, built):
    prog, vm = built
    for (rid, k), si in vm.s.items():
        row = _row(prog, f"supply_limit[{rid},{k}]")
        m = vm.segments[rid].stop_ids[k]
        assert dict(row.coeffs)[vm.y[(rid, m)]] == pytest.approx(-30.0)


def test_mccormick_exact_on_binaries(built):
    prog, vm = built
    (rid, m, i), Yi = next(iter(vm.Y.items()))
    yi, pi = vm.y[(rid, m)], vm.psi[(i, m)]
    rows = [_row(prog, f"mc_{k}[{rid},{m},{i}]") for k in ("y", "psi", "both")]
    for yv, pv in itertools.product((0.0, 1.0), repeat=2):
        ok = [Yv for Yv in (0.0, 0.5, 1.0) if all(_holds(r, {Yi: Yv, yi: yv, pi: pv}) for r in rows)]
        assert ok == [yv * pv]


def test_injection_with_no_charging(inst, built):
    prog, vm = built
    for n in inst.grid.nodes:
        if n.id == inst.grid.slack_id:
            continue
        assert _row(prog, f"p_balance[{n.id}]").rhs == n.load_p_pu
        assert _row(prog, f"q_balance[{n.id}]").rhs == n.load_q_pu


def test_origin_charge_forced_at_floor(inst, built, solved):
    # soc_init equals soc_min, so every route must charge at its origin
    prog, vm = built
    assert inst.battery.soc_init == inst.battery.soc_min
    for r in inst.routes:
        assert solved.x[vm.y[(r.id, r.origin)]] > 0.5


def test_origin_not_candidate_at_floor(inst):
    r = inst.routes[0]
    cands = inst.network.candidate_nodes - {r.origin}
    other = inst.replace(network=inst.network.with_candidates(cands),
                         couplings=tuple(c for c in inst.couplings if c.stop_id in cands))
    with pytest.raises(InfeasibleInstance, match="infeasible link"):
        build_program(other)


def test_link_longer_than_battery(inst):
    tight = inst.replace(battery=BatteryPolicy(soc_init=0.1, soc_min=0.1, soc_max=0.12))
    with pytest.raises(InfeasibleInstance, match="infeasible link"):
        build_program(tight)
    # the fairness variant keeps such routes conventional instead of failing
    soft = mini_instance(0, fairness_eta=0.5).replace(battery=tight.battery)
    build_program(soft)


def test_unselected_route_carries_no_energy():
    inst = mini_instance(2, fairness_eta=0.5)
    prog, vm = build_program(inst)
    rid = inst.routes[0].id
    lb, ub = prog.lb.copy(), prog.ub.copy()
    ub[vm.I[rid]] = 0.0
    res = ClarabelSolver().solve(prog, lb, ub)
    assert res.status == Status.OPTIMAL
    for (r, k), i in list(vm.e.items()) + list(vm.s.items()):
        if r == rid:
            assert abs(res.x[i]) < 1e-6


def _fair(inst, eta, i_max, budget="exact"):
    part = mini_instance(0, fairness_eta=0.5).fairness.partition
    return inst.replace(fairness=FairnessSettings(part, eta, i_max, budget))


def test_eta_range():
    part = mini_instance(0, fairness_eta=0.5).fairness.partition
    assert part.zone_count == 2
    with pytest.raises(ValidationError, match="fairness level out of range"):
        FairnessSettings(part, 0.3, 1)
    with pytest.raises(ValidationError, match="fairness level out of range"):
        FairnessSettings(part, 1.2, 1)
    FairnessSettings(part, 0.5, 1)


def test_fairness_free_equals_all_routes_fixed(inst):
    free = branch_and_bound(build_program(inst)[0], ClarabelSolver(), BnBConfig(rel_gap_tol=1e-7))
    fixed = _fair(inst, 0.0, len(inst.routes))
    prog, vm = build_program(fixed)
    assert not any(c.name == "fairness_cone" for c in prog.cones)
    res = branch_and_bound(prog, ClarabelSolver(), BnBConfig(rel_gap_tol=1e-7))
    assert res.objective == pytest.approx(free.objective, rel=1e-6)


def test_budget_row(inst):
    prog, vm = build_program(_fair(inst, 0.5, 1))
    row = _row(prog, "route_budget")
    assert row.sense == Sense.EQ and row.rhs == 1.0
    assert sorted(i for i, _ in row.coeffs) == sorted(vm.I.values())
    prog, _ = build_program(_fair(inst, 0.5, 2, "at_most"))
    assert _row(prog, "route_budget").sense == Sense.LE


def _cone_slack(cone, x):
    return cone.head.value(x) - math.sqrt(sum(b.value(x) ** 2 for b in cone.body))


def test_cone_vacuous_at_lower_bound(inst):
    prog, vm = build_program(_fair(inst, 0.5, 1))
    (cone,) = [c for c in prog.cones if c.name == "fairness_cone"]
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = np.zeros(prog.n)
        for i in vm.w.values():
            x[i] = rng.uniform(0, 1) * rng.integers(0, 2)
        assert _cone_slack(cone, x) >= -1e-12


def test_full_coverage_satisfies_any_eta(inst):
    for eta in (0.5, 0.8, 0.999):
        prog, vm = build_program(_fair(inst, eta, 2))
        (cone,) = [c for c in prog.cones if c.name == "fairness_cone"]
        x = np.zeros(prog.n)
        for i in vm.w.values():
            x[i] = 1.0
        assert _cone_slack(cone, x) >= -1e-12


def test_perfect_fairness_is_linear(inst):
    prog, vm = build_program(_fair(inst, 1.0, 1))
    assert not any(c.name == "fairness_cone" for c in prog.cones)
    row = _row(prog, "equal_ratio[west]")
    assert row.sense == Sense.EQ and row.rhs == 0.0


def test_text_round_trip(inst):
    prog, _ = build_program(mini_instance(3, fairness_eta=0.7))
    back = ConicProgram.from_text(prog.to_text())
    assert back == prog
    assert back.to_text() == prog.to_text()


def test_builder_guards():
    pb = ProgramBuilder()
    a = pb.add_var("a", 0, 1)
    with pytest.raises(ProgramError):
        pb.add_var("a")
    with pytest.raises(ProgramError):
        pb.add_var("b", 2, 1)
    assert pb.add_row("r1", [(a, 1.0)], "<=", 1.0) == 0
    assert pb.add_row("r2", [(a, 1.0)], "<=", 1.0) is None
    with pytest.raises(ProgramError):
        ConicProgram(pb.build().variables, (), (), ((3, 1.0),))


def test_two_node_relaxation_matches_exact_flow():
    prog, vm = grid_program(two_node_feeder())
    res = ClarabelSolver().solve(prog)
    assert res.status == Status.OPTIMAL
    key = ("1", "2")
    # values from an exact power-flow solve of the same feeder
    assert res.x[vm.v["2"]] == pytest.approx(0.9973397776059375, abs=1e-6)
    assert res.x[vm.l[key]] == pytest.approx(0.01111197031226685, abs=1e-6)
    assert res.x[vm.P[key]] == pytest.approx(0.10011111970312267, abs=1e-6)
    assert res.x[vm.Q[key]] == pytest.approx(0.03301111970312267, abs=1e-6)


def test_grid_program_unknown_node():
    with pytest.raises(ValidationError, match="unknown power node"):
        grid_program(two_node_feeder(), {"9": 0.1})
