"""End-to-end orchestration: networks from config, plan solves, sweeps and report files."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import RunConfig
from .core import TransitNetwork, ValidationError, natural_key
from .fairness import ZonePartition, jain_index, load_zone_file, load_zone_polygons, partition_from_polygons
from .gridsynth import coupling_candidates, load_grid_override, synthesize_grid
from .ingest import build_routes, read_feed, select_transport_nodes
from .instance import FairnessSettings, InfeasibleInstance, PlanningInstance
from .planning import PlanOutcome, PlanSolution, route_charge_rows, solve_plan, station_rows
from .solver import ClarabelSolver, DenseBarrierSolver, Status
from .validate import ValidationReport, validate_solution

log = logging.getLogger(__name__)


def build_network(cfg: RunConfig) -> TransitNetwork:
    feed_dir = cfg.path("feed_dir")
    if feed_dir is None:
        raise ValidationError("paths.feed_dir is required")
    feed = read_feed(feed_dir)
    sel = cfg.selection
    net = build_routes(feed, sel, cfg.coach_classes, cfg.dwell_hours)
    return net.with_candidates(select_transport_nodes(net, sel))


def build_grid(cfg: RunConfig, net: TransitNetwork):
    g = cfg.gridsynth
    if cfg.path("grid_nodes") is not None:
        return load_grid_override(cfg.path("grid_nodes"), cfg.path("grid_branches"), g.base_mva, g.base_kv)
    stops = [net.stops[s] for s in net.sorted_candidates()]
    return synthesize_grid(stops, g, cfg.anchors)


def load_partition(cfg: RunConfig, net: TransitNetwork) -> ZonePartition | None:
    if cfg.path("zone_file") is not None:
        part = load_zone_file(cfg.path("zone_file"))
    elif cfg.path("zone_polygons") is not None:
        part = partition_from_polygons(net, load_zone_polygons(cfg.path("zone_polygons")))
    else:
        return None
    H = int(cfg.fairness["zones"])
    if H and part.zone_count != H:
        raise ValidationError(f"fairness.zones = {H} but the zone data defines {part.zone_count} zones")
    return part


def build_instance(cfg: RunConfig, net: TransitNetwork | None = None, grid=None) -> PlanningInstance:
    net = net or build_network(cfg)
    grid = grid or build_grid(cfg, net)
    econ = cfg.economics
    stops = [net.stops[s] for s in net.sorted_candidates()]
    couplings = coupling_candidates(stops, grid, econ, cfg.gridsynth.coupling_k)
    fair = None
    f = cfg.fairness
    if f["enabled"]:
        part = load_partition(cfg, net)
        if part is None:
            raise ValidationError("fairness enabled but no zone_file or zone_polygons given")
        fair = FairnessSettings(part, float(f["eta"]), int(f["i_max"]), f["budget"])
    return PlanningInstance(net, grid, tuple(couplings), econ, cfg.battery, fair)


def subsolver(cfg: RunConfig):
    return DenseBarrierSolver() if cfg.backend == "dense-barrier" else ClarabelSolver()


@dataclass
class PlanRun:
    status: Status
    outcome: PlanOutcome | None
    solution: PlanSolution | None
    report: ValidationReport | None
    files: list[Path] = field(default_factory=list)
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == Status.OPTIMAL and self.solution is not None


def solve_instance(inst: PlanningInstance, cfg: RunConfig) -> PlanRun:
    try:
        out = solve_plan(inst, cfg.bnb, subsolver(cfg), implied_integrality=cfg.implied_integrality)
    except InfeasibleInstance as exc:
        return PlanRun(Status.INFEASIBLE, None, None, None, message=str(exc))
    report = validate_solution(out.solution, inst) if out.solution is not None else None
    return PlanRun(out.status, out, out.solution, report, message=out.message)


def run_plan(cfg: RunConfig, write: bool = True, inst: PlanningInstance | None = None) -> PlanRun:
    """Build the instance from ``cfg``, solve, validate and (optionally) write report files."""
    try:
        inst = inst or build_instance(cfg)
    except InfeasibleInstance as exc:
        return PlanRun(Status.INFEASIBLE, None, None, None, message=str(exc))
    run = solve_instance(inst, cfg)
    if write:
        from .export import write_plan_outputs

        run.files = write_plan_outputs(Path(cfg.paths["output_dir"]), inst, run)
    return run


SWEEP_COLUMNS = ("parameter", "status", "total_cost", "stations", "piles", "fairness_index", "station_cost",
                 "pile_cost", "line_cost", "loss_cost", "rel_gap", "routes", "message")


def _row_config(cfg: RunConfig, dimension: str, value: float) -> RunConfig:
    if dimension in ("theta0", "soc_init"):
        return cfg.with_values(battery={"soc_init": value})
    return cfg.with_values(fairness={"enabled": True, "eta": value})


def _sweep_row(args) -> dict:
    cfg, dimension, value, net, grid = args
    rcfg = _row_config(cfg, dimension, value)
    row = {k: "" for k in SWEEP_COLUMNS}
    row["parameter"] = value
    try:
        inst = build_instance(rcfg, net, grid)
        run = solve_instance(inst, rcfg)
    except ValidationError as exc:
        row.update(status="Error", message=str(exc))
        return row
    row["status"] = run.status.value
    row["message"] = run.message
    sol = run.solution
    if sol is not None:
        bd = sol.breakdown
        row.update(total_cost=bd.total, stations=sol.station_count, piles=sol.pile_count, station_cost=bd.station,
                   pile_cost=bd.pile, line_cost=bd.line, loss_cost=bd.loss, rel_gap=run.outcome.result.rel_gap,
                   routes=" ".join(sorted(sol.electrified_routes, key=natural_key)))
        # fairness index of the decoded routes, also reported for the fairness-free variant when zones exist
        if sol.zone_ratios is not None:
            row["fairness_index"] = jain_index(list(sol.zone_ratios.values()))
        else:
            part = load_partition(rcfg, inst.network)
            if part is not None:
                from .fairness import zone_ratios

                w = list(zone_ratios(sol.electrified_routes, inst.network, part).values())
                row["fairness_index"] = jain_index(w) if any(w) else ""
    return row


def sweep(cfg: RunConfig, dimension: str, write: bool = True) -> list[dict]:
    """One solve per sweep value on a shared network build; rows sorted by parameter."""
    values = cfg.sweep_values(dimension)
    net = build_network(cfg)
    grid = build_grid(cfg, net)
    jobs = [(cfg, dimension, v, net, grid) for v in values]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    rows.sort(key=lambda r: r["parameter"])
    if write:
        out = Path(cfg.paths["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        name = "theta0" if dimension in ("theta0", "soc_init") else "eta"
        with (out / f"sweep_{name}.csv").open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
            w.writeheader()
            w.writerows(rows)
    return rows


def worst_status(statuses) -> int:
    """Exit code: 0 all optimal, 1 limit reached, 2 infeasible or error, 3 numerical failure."""
    code = 0
    for s in statuses:
        s = s.value if isinstance(s, Status) else s
        code = max(code, {"Optimal": 0, "BoundLimit": 1, "Infeasible": 2, "Error": 2,
                          "NumericalFailure": 3}.get(s, 2))
    return code


def breakdown_consistent(sol: PlanSolution, rel: float = 1e-6) -> bool:
    return math.isclose(sol.breakdown.total, sol.objective, rel_tol=rel, abs_tol=1e-9)


def summary_record(inst: PlanningInstance, run: PlanRun) -> dict:
    out = {"status": run.status.value, "message": run.message}
    if run.solution is not None:
        sol = run.solution
        out.update({
            "objective": sol.objective,
            "breakdown": dict(sol.breakdown.as_rows()),
            "stations": station_rows(sol),
            "electrified_routes": sorted(sol.electrified_routes, key=natural_key),
            "solve": sol.solve,
        })
        if sol.zone_ratios is not None:
            out["zone_ratios"] = sol.zone_ratios
            out["fairness_index"] = sol.jain
            out["eta"] = sol.eta
    if run.report is not None:
        out["validation"] = {k: v for k, v in run.report.record().items() if k not in ("residuals", "voltage_deltas")}
    return out


def dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, default=str) + "\n")


__all__ = ["PlanRun", "build_grid", "build_instance", "build_network", "load_partition", "route_charge_rows",
           "run_plan", "solve_instance", "sweep", "worst_status"]
