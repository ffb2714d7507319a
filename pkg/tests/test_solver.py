import math

import numpy as np
import pytest

from busgrid.model import Affine, ProgramBuilder, VarKind, build_program, grid_program
from busgrid.solver import (
    BnBConfig,
    ClarabelSolver,
    DenseBarrierSolver,
    OracleScaleError,
    Status,
    SubResult,
    branch_and_bound,
    enumerate_oracle,
    relative_gap,
    result_as_dict,
)
from busgrid.solver.barrier import MAX_VARIABLES
from busgrid.synthetic import five_node_feeder, mini_instance

B = VarKind.BINARY


def _lp():
    pb = ProgramBuilder()
    x = pb.add_var("x", 0, 10)
    y = pb.add_var("y", 0, 10)
    pb.add_row("cover", [(x, 1), (y, 2)], ">=", 3)
    pb.add_objective(x, 1.0)
    pb.add_objective(y, 1.5)
    return pb.build()


def _half_binary():
    # relaxation sits at z = 0.5; z = 1 is the better endpoint
    pb = ProgramBuilder()
    z = pb.add_var("z", 0, 1, B)
    t = pb.add_var("t", 0, 10)
    pb.add_row("cap", [(z, 2.0), (t, -1.0)], "<=", 1.0)
    pb.add_row("floor", [(t, 1.0)], ">=", 0.0)
    pb.add_objective(z, -1.0)
    pb.add_objective(t, 0.6)
    return pb.build()


def _nearest_corner():
    # min t with ||(a - 0.6, b - 0.3)|| <= t over binary a, b; optimum (1, 0) at 0.5
    pb = ProgramBuilder()
    a = pb.add_var("a", 0, 1, B)
    b = pb.add_var("b", 0, 1, B)
    t = pb.add_var("t", 0, 10)
    pb.add_cone("dist", Affine(((t, 1.0),)), (Affine(((a, 1.0),), -0.6), Affine(((b, 1.0),), -0.3)))
    pb.add_objective(t, 1.0)
    return pb.build()


def test_continuous_program_single_node():
    prog = _lp()
    res = branch_and_bound(prog, ClarabelSolver())
    sub = ClarabelSolver().solve(prog)
    assert res.status == Status.OPTIMAL and res.node_count == 1
    assert res.objective == pytest.approx(sub.objective, rel=1e-9)
    assert res.objective == pytest.approx(2.25, rel=1e-7)


def test_one_binary_two_children():
    res = branch_and_bound(_half_binary(), ClarabelSolver())
    assert res.status == Status.OPTIMAL
    assert res.node_count == 3
    assert res.nodes[0].objective == pytest.approx(-0.5, abs=1e-7)
    assert res.x[0] == 1.0
    assert res.objective == pytest.approx(-1.0 + 0.6, abs=1e-7)


def test_cone_program_with_oracle():
    prog = _nearest_corner()
    res = branch_and_bound(prog, ClarabelSolver())
    orc = enumerate_oracle(prog, ClarabelSolver())
    assert res.objective == pytest.approx(0.5, abs=1e-7)
    assert orc.objective == pytest.approx(0.5, abs=1e-7)
    assert orc.assignment == {"a": 1, "b": 0}
    assert orc.evaluated == 4 and orc.feasible == 4


def test_infeasible_root():
    pb = ProgramBuilder()
    x = pb.add_var("x", 0, 1)
    pb.add_row("lo", [(x, 1)], ">=", 2)
    res = branch_and_bound(pb.build(), ClarabelSolver())
    assert res.status == Status.INFEASIBLE and res.x is None


def test_integer_infeasible():
    pb = ProgramBuilder()
    z = pb.add_var("z", 0, 1, B)
    pb.add_row("lo", [(z, 1)], ">=", 0.3)
    pb.add_row("hi", [(z, 1)], "<=", 0.7)
    res = branch_and_bound(pb.build(), ClarabelSolver())
    assert res.status == Status.INFEASIBLE and res.certified
    assert math.isinf(res.rel_gap)


def test_general_integer_split():
    pb = ProgramBuilder()
    k = pb.add_var("k", 0, 45, VarKind.INTEGER)
    pb.add_row("need", [(k, 1)], ">=", 2.4)
    pb.add_objective(k, 1.0)
    res = branch_and_bound(pb.build(), ClarabelSolver())
    assert res.x[0] == 3.0
    orc = enumerate_oracle(pb.build(), ClarabelSolver())
    assert orc.assignment == {"k": 3}


class _Flaky:
    """Fails numerically on the listed calls, delegating the rest."""

    def __init__(self, fail_calls):
        self.inner = ClarabelSolver()
        self.fail = set(fail_calls)
        self.calls = 0

    def solve(self, prog, lb=None, ub=None, tight=False):
        self.calls += 1
        if self.calls in self.fail:
            return SubResult(Status.NUMERICAL_FAILURE)
        return self.inner.solve(prog, lb, ub, tight)


def test_numerical_failure_retried_tight():
    res = branch_and_bound(_half_binary(), _Flaky({1}))
    assert res.status == Status.OPTIMAL and res.certified


def test_numerical_failure_discards_node():
    # root ok, down child fails twice; the up child still yields the optimum
    sub = _Flaky({2, 3})
    res = branch_and_bound(_half_binary(), sub)
    assert not res.certified
    assert res.status == Status.OPTIMAL
    assert any(n.status == Status.NUMERICAL_FAILURE.value for n in res.nodes)


def test_uncertified_search_never_claims_infeasible():
    pb = ProgramBuilder()
    z = pb.add_var("z", 0, 1, B)
    pb.add_row("lo", [(z, 1)], ">=", 0.3)
    pb.add_row("hi", [(z, 1)], "<=", 0.7)
    res = branch_and_bound(pb.build(), _Flaky({2, 3}))
    assert res.status == Status.NUMERICAL_FAILURE


def test_node_limit():
    prog, _ = build_program(mini_instance(1))
    res = branch_and_bound(prog, ClarabelSolver(), BnBConfig(node_limit=3))
    assert res.status == Status.BOUND_LIMIT
    assert res.node_count <= 3


def test_config_guards():
    with pytest.raises(ValueError):
        BnBConfig(rel_gap_tol=0)
    with pytest.raises(ValueError):
        BnBConfig(branching="strong")


@pytest.fixture(scope="module")
def mini_solve():
    prog, _ = build_program(mini_instance(1))
    return prog, branch_and_bound(prog, ClarabelSolver())


def test_search_invariants(mini_solve):
    prog, res = mini_solve
    assert res.status == Status.OPTIMAL
    assert res.rel_gap <= 1e-4
    assert res.rel_gap == pytest.approx(relative_gap(res.objective, res.best_bound))
    assert prog.integrality_gap(res.x) <= 1e-6
    assert prog.max_violation(res.x) <= 1e-6
    by_id = {n.id: n for n in res.nodes}
    for n in res.nodes:
        if n.parent is not None and math.isfinite(n.objective):
            assert n.bound >= by_id[n.parent].bound - 1e-9
    h = res.bound_history
    assert all(b >= a - 1e-9 for a, b in zip(h, h[1:]))
    assert len(res.log_lines) == res.node_count
    assert res.log_lines[0].startswith("node 0 depth 0")
    rec = result_as_dict(res)
    assert rec["node_count"] == len(rec["nodes"]) and rec["status"] == "Optimal"


def test_determinism(mini_solve):
    prog, res = mini_solve
    again = branch_and_bound(prog, ClarabelSolver())
    assert again.objective == res.objective
    assert np.array_equal(again.x, res.x)
    assert [(n.id, n.branch_var) for n in again.nodes] == [(n.id, n.branch_var) for n in res.nodes]


def test_oracle_without_integers():
    orc = enumerate_oracle(_lp(), ClarabelSolver())
    assert orc.evaluated == 1 and orc.found
    assert orc.objective == pytest.approx(2.25, rel=1e-7)


def test_oracle_single_feasible_assignment():
    pb = ProgramBuilder()
    a = pb.add_var("a", 0, 1, B)
    b = pb.add_var("b", 0, 1, B)
    t = pb.add_var("t", 0, 5)
    # a = 1 would need t >= 1.5; the cap leaves only (0, 1)
    pb.add_row("one", [(a, 1), (b, 1)], "==", 1)
    pb.add_row("no_a", [(a, 2), (t, -1)], "<=", 0.5)
    pb.add_row("t_cap", [(t, 1)], "<=", 0.4)
    pb.add_objective(t, 1.0)
    orc = enumerate_oracle(pb.build(), ClarabelSolver())
    assert orc.feasible == 1
    assert orc.assignment == {"a": 0, "b": 1}


def test_oracle_scale_guard():
    pb = ProgramBuilder()
    for k in range(15):
        pb.add_var(f"z{k}", 0, 1, B)
    with pytest.raises(OracleScaleError, match="oracle scale exceeded"):
        enumerate_oracle(pb.build(), ClarabelSolver())


def test_oracle_matches_bnb_on_mini(mini_solve):
    prog, res = mini_solve
    orc = enumerate_oracle(prog, ClarabelSolver())
    assert orc.objective == pytest.approx(res.objective, rel=1e-6)


@pytest.mark.parametrize("seed", [0, 3])
def test_barrier_agrees_with_clarabel(seed):
    prog, _ = build_program(mini_instance(seed))
    rel = prog.relaxed()
    a = ClarabelSolver().solve(rel)
    b = DenseBarrierSolver().solve(rel)
    assert a.status == b.status == Status.OPTIMAL
    assert b.objective == pytest.approx(a.objective, rel=1e-6)
    assert rel.max_violation(b.x) <= 1e-7


def test_barrier_on_feeder():
    prog, vm = grid_program(five_node_feeder())
    a = ClarabelSolver().solve(prog)
    b = DenseBarrierSolver().solve(prog)
    assert b.objective == pytest.approx(a.objective, rel=1e-6)
    assert b.x[vm.v["5"]] == pytest.approx(0.9811794091976392, abs=1e-6)


def test_barrier_detects_infeasible():
    pb = ProgramBuilder()
    x = pb.add_var("x", 0, 1)
    pb.add_row("lo", [(x, 1)], ">=", 2)
    assert DenseBarrierSolver().solve(pb.build()).status == Status.INFEASIBLE


def test_barrier_size_limit():
    pb = ProgramBuilder()
    for k in range(MAX_VARIABLES + 1):
        pb.add_var(f"x{k}", 0, 1)
    with pytest.raises(ValueError, match="limited to 200"):
        DenseBarrierSolver().solve(pb.build())


def test_subproblem_bound_overrides():
    prog = _lp()
    lb, ub = prog.lb.copy(), prog.ub.copy()
    ub[1] = 0.0
    res = ClarabelSolver().solve(prog, lb, ub)
    assert res.objective == pytest.approx(3.0, rel=1e-7)
    lb[0] = 5.0
    ub[0] = 4.0
    assert ClarabelSolver().solve(prog, lb, ub).status == Status.INFEASIBLE
