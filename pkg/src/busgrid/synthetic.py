"""Deterministic synthetic instances: tiny oracle-sized plans, test feeders and a replication feed."""

from __future__ import annotations

import math

import numpy as np

from .core import (
    FEET_PER_MILE,
    BatteryPolicy,
    BusRoute,
    BusStop,
    CoachClass,
    EconomicParams,
    PowerBranch,
    PowerGrid,
    PowerNode,
    TransitNetwork,
    geodesic_miles,
)
from .fairness import partition_from_polygons
from .gridsynth import Anchor, GridSynthConfig, assign_electrics, build_mst_topology, coupling_candidates
from .ingest import FeedTables, StopRow, StopTimeRow, TripRow
from .instance import FairnessSettings, PlanningInstance

CENTER = (47.3848267, -122.2327)  # Kent station area


def _offset(origin, miles_north, miles_east):
    lat = origin[0] + miles_north / 69.055
    lon = origin[1] + miles_east / (69.055 * math.cos(math.radians(origin[0])))
    return (lat, lon)


def two_node_feeder() -> PowerGrid:
    nodes = (PowerNode("1", 47.38, -122.23, 0.0, 0.0), PowerNode("2", 47.39, -122.23, 0.1, 0.0329))
    return PowerGrid(nodes, (PowerBranch("1", "2", 0.01, 0.01, 4.0),), "1")


def five_node_feeder() -> PowerGrid:
    """Slack 1 feeding 2; 2 feeds 3 and 4; 4 feeds 5."""
    loads = {"1": (0.0, 0.0), "2": (0.04, 0.012), "3": (0.06, 0.02), "4": (0.03, 0.01), "5": (0.08, 0.025)}
    nodes = tuple(PowerNode(k, 47.38 + 0.01 * i, -122.23, p, q) for i, (k, (p, q)) in enumerate(loads.items()))
    branches = (PowerBranch("1", "2", 0.012, 0.024, 4.0), PowerBranch("2", "3", 0.02, 0.03, 4.0),
                PowerBranch("2", "4", 0.015, 0.02, 4.0), PowerBranch("4", "5", 0.025, 0.035, 4.0))
    return PowerGrid(nodes, branches, "1")


def mini_instance(seed: int, n_routes: int = 2, n_candidates: int = 5, n_power: int = 3,
                  fairness_eta: float | None = None, soc_init: float = 0.1) -> PlanningInstance:
    """A tiny random planning instance with one coupling candidate per stop.

    Integer variables: one per (route, candidate on route) plus one per
    candidate, kept small enough for exhaustive enumeration. With
    ``fairness_eta`` set, two longitude-band zones and a one-route budget
    are attached.
    """
    rng = np.random.default_rng(seed)
    cand = []
    for k in range(n_candidates):
        north, east = rng.uniform(-3.0, 3.0, size=2)
        lat, lon = _offset(CENTER, north, east)
        cand.append(BusStop(f"c{k + 1}", f"candidate {k + 1}", round(lat, 6), round(lon, 6)))
    extra = []
    routes = []
    per_route = max(2, min(n_candidates - 1, (12 - n_candidates) // n_routes + 1))
    for r in range(n_routes):
        on = sorted(rng.choice(n_candidates, size=per_route, replace=False).tolist())
        seq = []
        for j, ci in enumerate(on):
            seq.append(cand[ci].id)
            # a plain stop between candidates
            a, b = cand[ci].coords, cand[on[(j + 1) % len(on)]].coords
            mid = BusStop(f"r{r + 1}s{j + 1}", "", round((a[0] + b[0]) / 2 + 0.002, 6),
                          round((a[1] + b[1]) / 2 + 0.002, 6))
            extra.append(mid)
            seq.append(mid.id)
        seq.append(seq[0])
        coords = {s.id: s.coords for s in cand + extra}
        raw = [max(0.2, geodesic_miles(coords[a], coords[b])) for a, b in zip(seq, seq[1:])]
        target = float(rng.uniform(14.0, 22.0))
        links = tuple(d * target / sum(raw) for d in raw)
        routes.append(BusRoute(f"R{r + 1}", tuple(seq), links, CoachClass.FORTY_FOOT))
    used = {s for r in routes for s in r.stops}
    stops = [s for s in cand + extra if s.id in used or s in cand]
    net = TransitNetwork({s.id: s for s in stops}, tuple(routes), frozenset(c.id for c in cand))
    anchors = [Anchor(f"g{i + 1}", *cand[i].coords) for i in range(n_power)]
    edges = build_mst_topology(anchors)
    grid = assign_electrics(anchors, edges, GridSynthConfig(default_load_pu=0.02, r_per_mile_pu=0.02,
                                                            x_per_mile_pu=0.04))
    econ = EconomicParams()
    couplings = coupling_candidates(cand, grid, econ, k=1)
    fair = None
    if fairness_eta is not None:
        lo = min(s.lon for s in stops) - 0.01
        hi = max(s.lon for s in stops) + 0.01
        mid = CENTER[1]
        polys = {"west": [(47.0, lo), (47.0, mid), (47.8, mid), (47.8, lo)],
                 "east": [(47.0, mid), (47.0, hi), (47.8, hi), (47.8, mid)]}
        fair = FairnessSettings(partition_from_polygons(net, polys), fairness_eta, 1)
    return PlanningInstance(net, grid, tuple(couplings), econ, BatteryPolicy(soc_init=soc_init), fair)


# replication feed: five out-and-back routes through one shared hub, benchmark lengths
REPLICATION_ROUTES = (
    # route id, round-trip miles, coach, bearing of the origin from the hub (deg), hub position along outbound
    ("22", 13.82, CoachClass.FORTY_FOOT, 10.0, 0.45),
    ("187", 11.81, CoachClass.FORTY_FOOT, 80.0, 0.55),
    ("182", 15.10, CoachClass.FORTY_FOOT, 150.0, 0.40),
    ("153", 16.37, CoachClass.FORTY_FOOT, 220.0, 0.50),
    ("102", 47.81, CoachClass.SIXTY_FOOT, 290.0, 0.35),
)
HUB_ID = "1000"
DETOUR = 1.3


def replication_feed(stops_per_direction: int = 9) -> FeedTables:
    """Outbound and inbound trips per route with ``shape_dist_traveled`` in feet.

    Route ``r`` runs from its origin through the hub to a terminal on the far
    side; the inbound trip retraces the same stops. Driving distance is the
    straight-line distance times a detour factor, scaled so each round trip
    has its benchmark length.
    """
    stops = {HUB_ID: StopRow(HUB_ID, "Hub", round(CENTER[0], 7), round(CENTER[1], 7))}
    trips, times = [], []
    for n, (rid, miles, _, bearing, hub_frac) in enumerate(REPLICATION_ROUTES):
        half = miles / 2.0
        straight = half / DETOUR
        b = math.radians(bearing)
        def at(dist):
            # signed distance along the route axis, negative = origin side
            return _offset(CENTER, dist * math.cos(b), dist * math.sin(b))
        start, end = -hub_frac * straight, (1 - hub_frac) * straight
        pts = np.linspace(start, end, stops_per_direction)
        hub_k = int(np.argmin(np.abs(pts)))
        pts[hub_k] = 0.0
        ids = []
        for k, d in enumerate(pts):
            if k == hub_k:
                ids.append(HUB_ID)
                continue
            sid = f"{(n + 1) * 100 + k + 1}"
            lat, lon = at(-d)
            stops[sid] = StopRow(sid, f"Route {rid} stop {k + 1}", round(lat, 7), round(lon, 7))
            ids.append(sid)
        seg = np.diff(pts)
        cum = np.concatenate([[0.0], np.cumsum(seg)]) * (half / (end - start)) * FEET_PER_MILE
        for direction, order in ((0, list(range(len(ids)))), (1, list(range(len(ids)))[::-1])):
            tid = f"{rid}-{'out' if direction == 0 else 'in'}"
            trips.append(TripRow(rid, tid, direction))
            base = cum[order[0]]
            for seq, k in enumerate(order, start=1):
                times.append(StopTimeRow(tid, seq, ids[k], round(abs(cum[k] - base), 3)))
    return FeedTables(tuple(stops.values()), tuple(trips), tuple(times), {r[0]: r[0] for r in REPLICATION_ROUTES})


def replication_coach_classes() -> dict[str, str]:
    return {rid: coach.value for rid, _, coach, _, _ in REPLICATION_ROUTES}


def replication_zone_polygons() -> dict[str, list[tuple[float, float]]]:
    """Three longitude bands around the hub."""
    w, e = CENTER[1] - 0.03, CENTER[1] + 0.03
    s, n = 47.0, 47.8
    return {
        "1": [(s, -123.0), (s, w), (n, w), (n, -123.0)],
        "2": [(s, w), (s, e), (n, e), (n, w)],
        "3": [(s, e), (s, -121.5), (n, -121.5), (n, e)],
    }
