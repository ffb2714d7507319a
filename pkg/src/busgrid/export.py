"""CSV, JSON and GeoJSON writers for plan results."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Mapping

from .core import natural_key
from .instance import PlanningInstance
from .planning import PlanSolution, route_charge_rows, station_rows


def write_csv(path: Path, rows: Iterable[Mapping], columns: Iterable[str]) -> Path:
    columns = list(columns)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in columns})
    return path


def _point(lat, lon, props) -> dict:
    return {"type": "Feature", "geometry": {"type": "Point", "coordinates": [lon, lat]}, "properties": props}


def _line(a, b, props) -> dict:
    return {"type": "Feature", "geometry": {"type": "LineString", "coordinates": [[a[1], a[0]], [b[1], b[0]]]},
            "properties": props}


def network_geojson(inst: PlanningInstance, sol: PlanSolution | None = None) -> dict:
    """Stops, power nodes, grid branches and built coupling lines as one feature collection."""
    built = {s.stop_id: s for s in sol.stations} if sol else {}
    feats = []
    net, grid = inst.network, inst.grid
    for sid in sorted(net.stops, key=natural_key):
        s = net.stops[sid]
        st = built.get(sid)
        feats.append(_point(s.lat, s.lon, {"kind": "stop", "id": sid, "name": s.name,
                                           "candidate": sid in net.candidate_nodes, "station": st is not None,
                                           "piles": st.piles if st else 0,
                                           "power_node": st.power_node if st else None}))
    coupled: dict[str, int] = {}
    for st in built.values():
        coupled[st.power_node] = coupled.get(st.power_node, 0) + 1
    nodes = {n.id: n for n in grid.nodes}
    for n in grid.nodes:
        props = {"kind": "power_node", "id": n.id, "slack": n.id == grid.slack_id, "load_p_pu": n.load_p_pu,
                 "load_q_pu": n.load_q_pu, "stations_coupled": coupled.get(n.id, 0)}
        if sol:
            props["v_sq_pu"] = sol.grid_state.v[n.id]
            props["charging_pu"] = sol.charging_load_pu.get(n.id, 0.0)
        feats.append(_point(n.lat, n.lon, props))
    for b in grid.branches:
        props = {"kind": "branch", "from": b.from_id, "to": b.to_id, "r_pu": b.r_pu, "x_pu": b.x_pu,
                 "length_miles": b.length_miles}
        if sol:
            props.update(P_pu=sol.grid_state.P[b.key], Q_pu=sol.grid_state.Q[b.key], l_pu=sol.grid_state.l[b.key])
        feats.append(_line(nodes[b.from_id].coords, nodes[b.to_id].coords, props))
    for st in built.values():
        feats.append(_line(net.stops[st.stop_id].coords, nodes[st.power_node].coords,
                           {"kind": "coupling_line", "stop_id": st.stop_id, "power_node": st.power_node,
                            "line_miles": st.line_miles, "line_cost": st.line_cost}))
    return {"type": "FeatureCollection", "features": feats}


def write_plan_outputs(out_dir: Path, inst: PlanningInstance, run) -> list[Path]:
    from .runner import dump_json, summary_record

    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    summary = out_dir / "summary.json"
    dump_json(summary_record(inst, run), summary)
    files.append(summary)
    sol = run.solution
    if sol is not None:
        files.append(write_csv(out_dir / "stations.csv", station_rows(sol),
                               ["stop_id", "piles", "power_node", "line_miles", "line_cost"]))
        files.append(write_csv(out_dir / "route_charges.csv", route_charge_rows(sol),
                               ["route_id", "electrified", "position", "stop_id", "energy_kwh", "charge_kwh"]))
        files.append(write_csv(out_dir / "cost_breakdown.csv",
                               [{"component": k, "usd": v} for k, v in sol.breakdown.as_rows()],
                               ["component", "usd"]))
        if sol.zone_ratios is not None:
            files.append(write_csv(out_dir / "zones.csv",
                                   [{"zone": z, "ratio": sol.zone_ratios[z], "solver_w": sol.solver_w[z]}
                                    for z in sol.zone_ratios], ["zone", "ratio", "solver_w"]))
    if run.report is not None:
        p = out_dir / "validation.txt"
        p.write_text(run.report.to_text())
        files.append(p)
        p = out_dir / "validation.json"
        p.write_text(run.report.to_json() + "\n")
        files.append(p)
    if run.outcome is not None:
        p = out_dir / "solver_log.txt"
        p.write_text("\n".join(run.outcome.result.log_lines) + "\n")
        files.append(p)
    p = out_dir / "network.geojson"
    p.write_text(json.dumps(network_geojson(inst, sol), indent=1) + "\n")
    files.append(p)
    return files
