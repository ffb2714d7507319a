"""Best-bound branch and bound over the integer-marked variables of a conic program."""

from __future__ import annotations

import heapq
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..model.program import ConicProgram
from .base import ConicSubproblemSolver, Status, SubResult

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BnBConfig:
    rel_gap_tol: float = 1e-4
    integrality_tol: float = 1e-6
    node_limit: int = 200_000
    time_limit_seconds: float = 3600.0
    branching: str = "most_fractional"
    node_selection: str = "best_bound"
    polish: bool = True

    def __post_init__(self):
        if not (self.rel_gap_tol > 0 and self.integrality_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.branching != "most_fractional" or self.node_selection != "best_bound":
            raise ValueError("only most-fractional branching with best-bound selection is implemented")


@dataclass
class NodeRecord:
    id: int
    parent: int | None
    depth: int
    status: str
    objective: float
    bound: float
    branch_var: int | None = None


@dataclass
class SolveResult:
    status: Status
    x: np.ndarray | None
    objective: float
    best_bound: float
    rel_gap: float
    node_count: int
    wall_seconds: float
    certified: bool = True
    nodes: list[NodeRecord] = field(default_factory=list)
    bound_history: list[float] = field(default_factory=list)
    log_lines: list[str] = field(default_factory=list)

    @property
    def incumbent(self) -> np.ndarray | None:
        return self.x

    def record(self) -> dict:
        """Machine-readable summary (no per-node data)."""
        return {
            "status": self.status.value,
            "objective": None if self.x is None else self.objective,
            "best_bound": self.best_bound,
            "rel_gap": self.rel_gap,
            "node_count": self.node_count,
            "wall_seconds": self.wall_seconds,
            "certified": self.certified,
        }

    def to_json(self) -> str:
        return json.dumps(self.record(), indent=2)


def relative_gap(incumbent: float, bound: float) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    return max(0.0, incumbent - bound) / max(1.0, abs(incumbent))


@dataclass(order=True)
class _Open:
    bound: float
    id: int
    depth: int = field(compare=False)
    lb: np.ndarray = field(compare=False, repr=False)
    ub: np.ndarray = field(compare=False, repr=False)
    x: np.ndarray = field(compare=False, repr=False)


class BranchAndBound:
    def __init__(self, prog: ConicProgram, sub: ConicSubproblemSolver, cfg: BnBConfig | None = None):
        self.prog = prog
        self.sub = sub
        self.cfg = cfg or BnBConfig()
        self.int_idx = prog.integer_indices
        self.nodes: list[NodeRecord] = []
        self.log_lines: list[str] = []
        self.certified = True
        self.inc_x: np.ndarray | None = None
        self.inc_obj = math.inf

    def _solve(self, lb, ub) -> SubResult:
        res = self.sub.solve(self.prog, lb, ub)
        if res.status == Status.NUMERICAL_FAILURE:
            res = self.sub.solve(self.prog, lb, ub, tight=True)
        return res

    def _fractional(self, x: np.ndarray) -> int | None:
        if self.int_idx.size == 0:
            return None
        vals = x[self.int_idx]
        frac = np.abs(vals - np.round(vals))
        worst = float(frac.max())
        if worst <= self.cfg.integrality_tol:
            return None
        # most fractional, lowest index on ties (argmax returns the first)
        dist = np.minimum(vals - np.floor(vals), np.ceil(vals) - vals)
        return int(self.int_idx[int(np.argmax(dist))])

    def _polish(self, x: np.ndarray, lb, ub) -> tuple[np.ndarray, float]:
        xr = x.copy()
        xr[self.int_idx] = np.round(x[self.int_idx])
        if not self.cfg.polish or self.int_idx.size == 0:
            return xr, self.prog.objective_value(xr)
        plb, pub = lb.copy(), ub.copy()
        plb[self.int_idx] = xr[self.int_idx]
        pub[self.int_idx] = xr[self.int_idx]
        res = self._solve(plb, pub)
        if res.status == Status.OPTIMAL:
            out = res.x.copy()
            out[self.int_idx] = xr[self.int_idx]
            return out, self.prog.objective_value(out)
        return xr, self.prog.objective_value(xr)

    def _log(self, rec: NodeRecord) -> None:
        gap = relative_gap(self.inc_obj, rec.bound)
        line = f"node {rec.id} depth {rec.depth} status {rec.status} bound {rec.bound:.10g} gap {gap:.3e}"
        self.log_lines.append(line)
        log.debug(line)

    def _evaluate(self, node_id, parent, depth, lb, ub, parent_bound, heap, branch_var=None) -> None:
        res = self._solve(lb, ub)
        if res.status == Status.NUMERICAL_FAILURE:
            log.warning("node %d discarded after repeated numerical failure; bound not certified", node_id)
            self.certified = False
            rec = NodeRecord(node_id, parent, depth, res.status.value, math.nan, parent_bound, branch_var)
            self.nodes.append(rec)
            self._log(rec)
            return
        if res.status == Status.INFEASIBLE:
            rec = NodeRecord(node_id, parent, depth, res.status.value, math.inf, math.inf, branch_var)
            self.nodes.append(rec)
            self._log(rec)
            return
        bound = max(res.objective, parent_bound)
        rec = NodeRecord(node_id, parent, depth, res.status.value, res.objective, bound, branch_var)
        self.nodes.append(rec)
        self._log(rec)
        if bound >= self.inc_obj:
            return
        j = self._fractional(res.x)
        if j is None:
            x, obj = self._polish(res.x, lb, ub)
            if obj < self.inc_obj:
                self.inc_x, self.inc_obj = x, obj
            return
        heapq.heappush(heap, _Open(bound, node_id, depth, lb, ub, res.x))

    def run(self) -> SolveResult:
        cfg = self.cfg
        t0 = time.perf_counter()
        heap: list[_Open] = []
        lb, ub = self.prog.lb.copy(), self.prog.ub.copy()
        if self.int_idx.size:
            lb[self.int_idx] = np.ceil(lb[self.int_idx] - cfg.integrality_tol)
            ub[self.int_idx] = np.floor(ub[self.int_idx] + cfg.integrality_tol)
        self._evaluate(0, None, 0, lb, ub, -math.inf, heap)
        root = self.nodes[0]
        if root.status == Status.INFEASIBLE.value:
            return self._result(Status.INFEASIBLE, t0, math.inf, [])
        if root.status == Status.NUMERICAL_FAILURE.value:
            return self._result(Status.NUMERICAL_FAILURE, t0, -math.inf, [])
        history = [root.bound]
        next_id = 1
        status = Status.OPTIMAL
        while heap:
            best = heap[0].bound
            history.append(min(best, self.inc_obj))
            if relative_gap(self.inc_obj, best) <= cfg.rel_gap_tol:
                break
            if next_id >= cfg.node_limit or time.perf_counter() - t0 > cfg.time_limit_seconds:
                status = Status.BOUND_LIMIT
                break
            node = heapq.heappop(heap)
            if node.bound >= self.inc_obj:
                continue
            j = self._fractional(node.x)
            val = node.x[j]
            down_ub = node.ub.copy()
            down_ub[j] = math.floor(val)
            up_lb = node.lb.copy()
            up_lb[j] = math.ceil(val)
            self._evaluate(next_id, node.id, node.depth + 1, node.lb, down_ub, node.bound, heap, j)
            self._evaluate(next_id + 1, node.id, node.depth + 1, up_lb, node.ub, node.bound, heap, j)
            next_id += 2
        if heap:
            best_bound = min(heap[0].bound, self.inc_obj)
        else:
            best_bound = self.inc_obj
        history.append(best_bound)
        if self.inc_x is None and status == Status.OPTIMAL:
            # infeasibility is only proven when no node was discarded
            status = Status.INFEASIBLE if self.certified else Status.NUMERICAL_FAILURE
        return self._result(status, t0, best_bound, history)

    def _result(self, status, t0, best_bound, history) -> SolveResult:
        gap = relative_gap(self.inc_obj, best_bound) if self.inc_x is not None else math.inf
        return SolveResult(status, self.inc_x, self.inc_obj, best_bound, gap, len(self.nodes),
                           time.perf_counter() - t0, self.certified, self.nodes, history, self.log_lines)


def branch_and_bound(prog: ConicProgram, sub: ConicSubproblemSolver, cfg: BnBConfig | None = None) -> SolveResult:
    """Minimize ``prog`` over its integer marks; see :class:`BnBConfig` for the search rules."""
    return BranchAndBound(prog, sub, cfg).run()


def result_as_dict(res: SolveResult) -> dict:
    out = res.record()
    out["nodes"] = [asdict(n) for n in res.nodes]
    return out
