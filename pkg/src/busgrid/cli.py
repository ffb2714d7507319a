"""Command line entry point.

Every verb reads the same layered configuration: ``--config`` files in order,
then ``--set section.key=value`` overrides. ``--replication`` puts the shipped
desk-scale instance underneath everything else.

Exit codes follow the worst solve status: 0 optimal, 1 node or time limit,
2 infeasible or input error, 3 numerical failure. ``validate`` exits 4 when
the report fails.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from . import REPLICATION_CONFIG, data_path
from .config import WORKERS_ENV, RunConfig
from .core import ValidationError, natural_key
from .export import write_csv
from .gridsynth import coupling_candidates, write_grid_tables
from .planning import min_charges_oracle

EXIT_VALIDATION_FAILED = 4


def _load(ctx: click.Context, overrides: tuple[str, ...] = ()) -> RunConfig:
    o = ctx.obj
    files = ([data_path(REPLICATION_CONFIG)] if o["replication"] else []) + list(o["config"])
    sets = list(o["set"]) + list(overrides)
    if o["output_dir"]:
        sets.append(f'paths.output_dir="{Path(o["output_dir"]).resolve().as_posix()}"')
    if o["workers"]:
        sets.append(f"run.workers={o['workers']}")
    return RunConfig.load(files, sets)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.paths["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(2)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("-c", "--config", "config", multiple=True, type=click.Path(exists=True, dir_okay=False),
              help="TOML config file; repeat to layer, later files win.")
@click.option("--set", "set_", multiple=True, metavar="SECTION.KEY=VALUE",
              help="Override one config key; VALUE is a TOML literal.")
@click.option("--replication", is_flag=True, help="Start from the shipped replication instance.")
@click.option("-o", "--output-dir", default=None, help="Shortcut for paths.output_dir.")
@click.option("-j", "--workers", type=int, default=None, help=f"Parallel sweep rows (also ${WORKERS_ENV}).")
@click.option("-v", "--verbose", count=True, help="-v for info logging, -vv for per-node solver logs.")
@click.version_option(package_name="artifact")
@click.pass_context
def main(ctx, config, set_, replication, output_dir, workers, verbose):
    """Plan on-route charging stations for battery electric buses."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = {"config": config, "set": set_, "replication": replication, "output_dir": output_dir,
               "workers": workers}


@main.command()
@click.pass_context
def ingest(ctx):
    """Build routes and transport nodes from the feed; write routes.csv and candidates.csv."""
    from .runner import build_network

    try:
        cfg = _load(ctx)
        net = build_network(cfg)
    except ValidationError as exc:
        _fail(exc)
    out = _out_dir(cfg)
    rows = [{"route_id": r.id, "coach": r.coach_class.value, "stops": len(r.stops),
             "roundtrip_miles": sum(r.link_distances), "trip_energy_kwh": r.trip_energy_kwh,
             "sequence": " ".join(r.stops)} for r in net.routes]
    write_csv(out / "routes.csv", rows, ["route_id", "coach", "stops", "roundtrip_miles", "trip_energy_kwh",
                                         "sequence"])
    cands = [net.stops[s] for s in net.sorted_candidates()]
    write_csv(out / "candidates.csv", [{"stop_id": s.id, "name": s.name, "lat": s.lat, "lon": s.lon} for s in cands],
              ["stop_id", "name", "lat", "lon"])
    click.echo(f"{len(net.routes)} routes, {len(net.stops)} stops, {len(cands)} transport nodes -> {out}")


@main.command("synth-grid")
@click.pass_context
def synth_grid(ctx):
    """Synthesize (or load) the power grid; write grid tables and coupling candidates."""
    from .runner import build_grid, build_network

    try:
        cfg = _load(ctx)
        net = build_network(cfg)
        grid = build_grid(cfg, net)
    except ValidationError as exc:
        _fail(exc)
    out = _out_dir(cfg)
    nodes_csv, branches_csv = write_grid_tables(grid, out)
    stops = [net.stops[s] for s in net.sorted_candidates()]
    cc = coupling_candidates(stops, grid, cfg.economics, cfg.gridsynth.coupling_k)
    write_csv(out / "couplings.csv",
              [{"stop_id": c.stop_id, "power_node": c.power_node_id, "line_miles": c.line_miles,
                "line_cost": c.line_cost_usd} for c in cc], ["stop_id", "power_node", "line_miles", "line_cost"])
    click.echo(f"{len(grid.nodes)} power nodes (slack {grid.slack_id}), {len(grid.branches)} branches, "
               f"{len(cc)} coupling candidates -> {nodes_csv.parent}")


def _print_plan(run) -> None:
    click.echo(f"status: {run.status.value}")
    if run.message:
        click.echo(f"message: {run.message}")
    sol = run.solution
    if sol is None:
        return
    for name, usd in sol.breakdown.as_rows():
        click.echo(f"  {name:<8} {usd:>16,.2f}")
    click.echo(f"stations {sol.station_count}, piles {sol.pile_count}, routes "
               f"{' '.join(sorted(sol.electrified_routes, key=natural_key))}")
    if sol.jain is not None:
        click.echo(f"fairness index {sol.jain:.6f} (eta {sol.eta:g})")
    res = run.outcome.result
    click.echo(f"gap {res.rel_gap:.2e}, {res.node_count} nodes, {res.wall_seconds:.2f} s"
               + ("" if res.certified else ", bound not certified"))
    if run.report is not None:
        click.echo(run.report.to_text().rstrip())


@main.command()
@click.pass_context
def plan(ctx):
    """Solve one planning instance and write the report files."""
    from .runner import run_plan, worst_status

    try:
        cfg = _load(ctx)
        run = run_plan(cfg)
    except ValidationError as exc:
        _fail(exc)
    _print_plan(run)
    if run.files:
        click.echo(f"wrote {len(run.files)} files to {run.files[0].parent}")
    sys.exit(worst_status([run.status]))


@main.command()
@click.argument("dimension", type=click.Choice(["theta0", "eta"]))
@click.option("--values", default=None, help="Comma-separated sweep values replacing the configured list.")
@click.pass_context
def sweep(ctx, dimension, values):
    """Solve once per sweep value; write sweep_<dimension>.csv."""
    from .runner import sweep as run_sweep
    from .runner import worst_status

    extra = []
    if values:
        key = "soc_init" if dimension == "theta0" else "eta"
        extra.append(f"sweep.{key}=[{values}]")
    try:
        cfg = _load(ctx, tuple(extra))
        rows = run_sweep(cfg, dimension)
    except ValidationError as exc:
        _fail(exc)
    click.echo(f"{'parameter':>10} {'status':<17} {'total_cost':>16} {'stations':>8} {'piles':>6} {'fairness':>9}")
    for r in rows:
        total = f"{r['total_cost']:,.2f}" if r["total_cost"] != "" else "-"
        fair = f"{r['fairness_index']:.4f}" if r["fairness_index"] != "" else "-"
        click.echo(f"{r['parameter']:>10.4g} {r['status']:<17} {total:>16} {r['stations']!s:>8} {r['piles']!s:>6} "
                   f"{fair:>9}")
    sys.exit(worst_status([r["status"] for r in rows]))


@main.command()
@click.pass_context
def validate(ctx):
    """Solve, then check relaxation exactness, an exact power-flow re-solve and battery feasibility."""
    from .runner import dump_json, run_plan

    try:
        cfg = _load(ctx)
        run = run_plan(cfg, write=False)
    except ValidationError as exc:
        _fail(exc)
    if run.report is None:
        click.echo(f"no solution to validate: {run.status.value} {run.message}".rstrip())
        sys.exit(2)
    out = _out_dir(cfg)
    (out / "validation.txt").write_text(run.report.to_text())
    dump_json(run.report.record(), out / "validation.json")
    click.echo(run.report.to_text().rstrip())
    sys.exit(0 if run.report.passed else EXIT_VALIDATION_FAILED)


@main.command()
@click.option("--benchmarks", is_flag=True, help="Charge counts for the built-in benchmark routes over every "
                                                  "initial SOC level instead of the configured network.")
@click.option("--enumerate", "enum", is_flag=True, help="Also run the exhaustive enumeration oracle on the "
                                                        "configured instance (tiny instances only).")
@click.option("--max-integers", default=14, show_default=True, help="Scale limit for --enumerate.")
@click.pass_context
def oracle(ctx, benchmarks, enum, max_integers):
    """Closed-form minimum charge counts and, optionally, the enumeration oracle."""
    if benchmarks:
        from .benchmarks import BENCHMARK_ROUTES, BENCHMARK_SOC_LEVELS, benchmark_route
        from .core import BatteryPolicy

        click.echo("route  " + " ".join(f"{t:>5g}" for t in BENCHMARK_SOC_LEVELS))
        for b in BENCHMARK_ROUTES:
            r = benchmark_route(b)
            counts = [min_charges_oracle(r, BatteryPolicy(soc_init=t)) for t in BENCHMARK_SOC_LEVELS]
            click.echo(f"{b.route_id:<6} " + " ".join(f"{c:>5d}" for c in counts))
        return
    from .runner import build_instance, subsolver

    try:
        cfg = _load(ctx)
        inst = build_instance(cfg)
    except ValidationError as exc:
        _fail(exc)
    pol = cfg.battery
    for r in inst.routes:
        try:
            n = min_charges_oracle(r, pol)
        except ValidationError as exc:
            n = f"infeasible ({exc})"
        click.echo(f"route {r.id}: minimum charges {n} at soc_init {pol.soc_init:g}")
    if not enum:
        return
    from .model import build_program
    from .solver import OracleScaleError, branch_and_bound, enumerate_oracle

    prog, _ = build_program(inst, implied_integrality=cfg.implied_integrality)
    try:
        ores = enumerate_oracle(prog, subsolver(cfg), max_integers)
    except OracleScaleError as exc:
        _fail(exc)
    if not ores.found:
        click.echo(f"enumeration: infeasible ({ores.evaluated} leaves)")
        sys.exit(2)
    bres = branch_and_bound(prog, subsolver(cfg), cfg.bnb)
    diff = abs(bres.objective - ores.objective) / max(1.0, abs(ores.objective))
    click.echo(f"enumeration: objective {ores.objective:.10g} over {ores.evaluated} leaves "
               f"({ores.feasible} feasible)")
    click.echo(f"branch and bound: {bres.status.value}, objective {bres.objective:.10g}, "
               f"difference {diff:.2e} relative")


if __name__ == "__main__":  # pragma: no cover
    main()
