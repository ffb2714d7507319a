"""Virtual power grid synthesis over the selected transportation nodes."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import networkx as nx

from .core import (
    KM_PER_MILE,
    BusStop,
    EconomicParams,
    PowerBranch,
    PowerGrid,
    PowerNode,
    ValidationError,
    geodesic_miles,
    natural_key,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSynthConfig:
    cluster_threshold_km: float = 2.0
    r_per_mile_pu: float = 0.0019
    x_per_mile_pu: float = 0.0038
    default_current_sq_limit_pu: float = 4.0
    default_load_pu: float = 0.05
    vmin_pu: float = 0.9
    vmax_pu: float = 1.1
    base_mva: float = 10.0
    base_kv: float = 110.0
    coupling_k: int = 3

    def __post_init__(self):
        if not self.cluster_threshold_km > 0:
            raise ValidationError("cluster_threshold_km must be positive")
        if not (self.r_per_mile_pu > 0 and self.x_per_mile_pu > 0):
            raise ValidationError("impedance densities must be positive")
        if self.coupling_k < 1:
            raise ValidationError("coupling_k must be >= 1")


@dataclass(frozen=True)
class CouplingCandidate:
    power_node_id: str
    stop_id: str
    line_cost_usd: float
    line_miles: float


@dataclass(frozen=True)
class Anchor:
    id: str
    lat: float
    lon: float

    @property
    def coords(self) -> tuple[float, float]:
        return (self.lat, self.lon)


def select_power_nodes(candidates: Sequence, threshold_km: float) -> list[str]:
    """Greedy clustering pass: keep a node unless an earlier kept node lies within the threshold.

    ``candidates`` is an ordered sequence of objects with ``id``, ``lat`` and
    ``lon``. Returns the kept ids in input order.
    """
    visited: set[int] = set()
    kept: list[str] = []
    for m, a in enumerate(candidates):
        if m in visited:
            continue
        kept.append(a.id)
        for n in range(m + 1, len(candidates)):
            if n in visited:
                continue
            b = candidates[n]
            if geodesic_miles((a.lat, a.lon), (b.lat, b.lon)) * KM_PER_MILE < threshold_km:
                visited.add(n)
    return kept


def _pick_slack(ids: Sequence[str], edges: Sequence[tuple[str, str, float]]) -> str:
    degree = {i: 0 for i in ids}
    for u, v, _ in edges:
        degree[u] += 1
        degree[v] += 1
    return min(ids, key=lambda i: (-degree[i], natural_key(i)))


def orient_from(slack: str, ids: Sequence[str], edges: Sequence[tuple[str, str, float]]) -> list[tuple[str, str, float]]:
    """Orient undirected tree edges away from ``slack`` by breadth-first traversal."""
    g = nx.Graph()
    g.add_nodes_from(ids)
    for u, v, w in edges:
        g.add_edge(u, v, weight=w)
    if g.number_of_edges() != len(ids) - 1 or not nx.is_connected(g):
        raise ValidationError("topology not radial")
    out = []
    for u, v in nx.bfs_edges(g, slack, sort_neighbors=lambda ns: sorted(ns, key=natural_key)):
        out.append((u, v, g[u][v]["weight"]))
    return out


def build_mst_topology(anchors: Sequence[Anchor], slack_id: str | None = None) -> list[tuple[str, str, float]]:
    """Minimum spanning tree over the complete geodesic graph of the anchors.

    Returns ``(from, to, miles)`` edges oriented away from the slack node
    (highest degree, lowest id on ties, unless given).
    """
    if not anchors:
        raise ValidationError("need at least one power node")
    ids = [a.id for a in anchors]
    g = nx.Graph()
    g.add_nodes_from(ids)
    for i, a in enumerate(anchors):
        for b in anchors[i + 1:]:
            d = geodesic_miles(a.coords, b.coords)
            g.add_edge(a.id, b.id, weight=d)
    tree = nx.minimum_spanning_tree(g, algorithm="kruskal")
    edges = [(u, v, data["weight"]) for u, v, data in tree.edges(data=True)]
    for u, v, w in edges:
        if w == 0:
            log.warning("zero-length branch between coincident power nodes %s and %s", u, v)
    slack = slack_id if slack_id is not None else _pick_slack(ids, edges)
    return orient_from(slack, ids, edges)


def assign_electrics(anchors: Sequence[Anchor], edges: Sequence[tuple[str, str, float]], cfg: GridSynthConfig,
                     loads: Mapping[str, tuple[float, float | None]] | None = None) -> PowerGrid:
    """Turn a tree topology into a per-unit :class:`PowerGrid`.

    Impedances scale linearly with branch length. Node loads come from
    ``loads`` (per-unit ``(p, q)``; ``q=None`` uses power factor 0.95) or the
    configured default. The slack is the node of highest degree.
    """
    ids = [a.id for a in anchors]
    slack = _pick_slack(ids, edges)
    oriented = orient_from(slack, ids, edges)
    loads = loads or {}
    vmin_sq, vmax_sq = cfg.vmin_pu ** 2, cfg.vmax_pu ** 2
    nodes = []
    for a in anchors:
        p, q = loads.get(a.id, (cfg.default_load_pu, None))
        nodes.append(PowerNode(a.id, a.lat, a.lon, p, q, vmin_sq, vmax_sq))
    # zero-length branches still need positive resistance
    min_len = 1e-3
    branches = [PowerBranch(u, v, max(w, min_len) * cfg.r_per_mile_pu, max(w, min_len) * cfg.x_per_mile_pu,
                            cfg.default_current_sq_limit_pu, w) for u, v, w in oriented]
    return PowerGrid(tuple(nodes), tuple(branches), slack, 1.0, cfg.base_mva, cfg.base_kv)


def synthesize_grid(stops: Sequence[BusStop], cfg: GridSynthConfig,
                    anchor_ids: Sequence[str] | None = None) -> PowerGrid:
    """Cluster candidate stops into power nodes and connect them radially.

    ``anchor_ids`` overrides the clustering pass with an explicit anchor list.
    """
    ordered = sorted(stops, key=lambda s: natural_key(s.id))
    if anchor_ids is None:
        anchor_ids = select_power_nodes(ordered, cfg.cluster_threshold_km)
    by_id = {s.id: s for s in ordered}
    anchors = [Anchor(i, by_id[i].lat, by_id[i].lon) for i in anchor_ids]
    edges = build_mst_topology(anchors)
    return assign_electrics(anchors, edges, cfg)


def coupling_candidates(stops: Sequence[BusStop], grid: PowerGrid, econ: EconomicParams,
                        k: int = 3) -> list[CouplingCandidate]:
    """The ``k`` nearest power nodes of every candidate stop, with line costs."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    out = []
    for s in sorted(stops, key=lambda s: natural_key(s.id)):
        dists = sorted(((geodesic_miles(s.coords, n.coords), natural_key(n.id), n.id) for n in grid.nodes))
        for miles, _, nid in dists[:k]:
            out.append(CouplingCandidate(nid, s.id, miles * econ.line_cost_per_mile, miles))
    return out


def load_grid_override(nodes_csv: str | Path, branches_csv: str | Path, base_mva: float = 10.0,
                       base_kv: float = 110.0, slack_id: str | None = None) -> PowerGrid:
    """Read a grid from two comma-separated tables.

    ``nodes_csv`` columns: ``id, lat, lon, load_kw[, load_kvar], vmin_pu, vmax_pu``
    (voltage magnitudes, squared on load). ``branches_csv`` columns:
    ``from, to, r_pu, x_pu, limit_pu[, length_miles]`` where ``limit_pu`` is a
    current magnitude limit. Branches are re-oriented from the slack, which
    defaults to the node of highest degree.
    """
    base_kw = base_mva * 1000.0
    with open(nodes_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    nodes = {}
    for r in rows:
        kvar = r.get("load_kvar")
        q = float(kvar) / base_kw if kvar not in (None, "") else None
        nodes[r["id"]] = PowerNode(r["id"], float(r["lat"]), float(r["lon"]), float(r["load_kw"]) / base_kw, q,
                                   float(r["vmin_pu"]) ** 2, float(r["vmax_pu"]) ** 2)
    with open(branches_csv, newline="") as fh:
        brows = list(csv.DictReader(fh))
    raw = {}
    for r in brows:
        length = r.get("length_miles")
        u, v = r["from"], r["to"]
        if length in (None, ""):
            length = geodesic_miles(nodes[u].coords, nodes[v].coords)
        raw[frozenset((u, v))] = (float(r["r_pu"]), float(r["x_pu"]), float(r["limit_pu"]) ** 2, float(length))
    ids = list(nodes)
    edges = [(tuple(sorted(k))[0], tuple(sorted(k))[-1], val[3]) for k, val in raw.items()]
    slack = slack_id or _pick_slack(ids, edges)
    oriented = orient_from(slack, ids, edges)
    branches = []
    for u, v, _ in oriented:
        r_pu, x_pu, lim, length = raw[frozenset((u, v))]
        branches.append(PowerBranch(u, v, r_pu, x_pu, lim, length))
    return PowerGrid(tuple(nodes.values()), tuple(branches), slack, 1.0, base_mva, base_kv)


def write_grid_tables(grid: PowerGrid, folder: str | Path) -> tuple[Path, Path]:
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    npath, bpath = folder / "grid_nodes.csv", folder / "grid_branches.csv"
    with npath.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "lat", "lon", "load_kw", "load_kvar", "vmin_pu", "vmax_pu"])
        for n in grid.nodes:
            w.writerow([n.id, n.lat, n.lon, n.load_p_pu * grid.base_kw, n.load_q_pu * grid.base_kw,
                        n.vmin_sq_pu ** 0.5, n.vmax_sq_pu ** 0.5])
    with bpath.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["from", "to", "r_pu", "x_pu", "limit_pu", "length_miles"])
        for b in grid.branches:
            w.writerow([b.from_id, b.to_id, b.r_pu, b.x_pu, b.current_sq_limit_pu ** 0.5, b.length_miles])
    return npath, bpath
