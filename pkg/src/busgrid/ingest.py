"""GTFS-style feed parsing and transportation-node selection."""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import (
    FEET_PER_MILE,
    BusRoute,
    BusStop,
    CoachClass,
    TransitNetwork,
    ValidationError,
    geodesic_miles,
    natural_key,
)

log = logging.getLogger(__name__)


class FeedError(ValidationError):
    pass


@dataclass(frozen=True)
class StopRow:
    stop_id: str
    name: str
    lat: float | None
    lon: float | None


@dataclass(frozen=True)
class TripRow:
    route_id: str
    trip_id: str
    direction: int = 0


@dataclass(frozen=True)
class StopTimeRow:
    trip_id: str
    stop_sequence: int
    stop_id: str
    shape_dist_traveled: float | None = None


@dataclass(frozen=True)
class FeedTables:
    stops: tuple[StopRow, ...]
    trips: tuple[TripRow, ...]
    stop_times: tuple[StopTimeRow, ...]
    # optional GTFS routes.txt mapping route_id -> short name
    route_names: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class SelectionConfig:
    distance_threshold_ft: float = 40_000.0
    common_stop_min_routes: int = 3
    route_filter: tuple[str, ...] | None = None
    shape_dist_units: str = "ft"

    def __post_init__(self):
        if not self.distance_threshold_ft > 0:
            raise ValidationError("distance_threshold_ft must be positive")
        if self.common_stop_min_routes < 1:
            raise ValidationError("common_stop_min_routes must be >= 1")
        if self.route_filter is not None:
            object.__setattr__(self, "route_filter", tuple(str(r) for r in self.route_filter))
        if self.shape_dist_units not in _UNIT_TO_MILES:
            raise ValidationError(f"unknown shape_dist_units {self.shape_dist_units!r}")


_UNIT_TO_MILES = {"ft": 1.0 / FEET_PER_MILE, "mi": 1.0, "km": 1.0 / 1.609344, "m": 1.0 / 1609.344}


def _opt_float(value: str | None) -> float | None:
    if value is None or str(value).strip() == "":
        return None
    return float(value)


def _read_table(folder: Path, name: str, required: bool = True) -> list[dict[str, str]]:
    for ext in (".txt", ".csv"):
        path = folder / f"{name}{ext}"
        if path.exists():
            with path.open(newline="", encoding="utf-8-sig") as fh:
                return [{k.strip(): (v or "").strip() for k, v in row.items() if k is not None}
                        for row in csv.DictReader(fh)]
    if required:
        raise FeedError(f"feed table {name!r} not found in {folder}")
    return []


def read_feed(folder: str | Path) -> FeedTables:
    """Read ``stops``, ``trips`` and ``stop_times`` (plus optional ``routes``) from a folder."""
    folder = Path(folder)
    stops = tuple(StopRow(r["stop_id"], r.get("stop_name", ""), _opt_float(r.get("stop_lat")),
                          _opt_float(r.get("stop_lon"))) for r in _read_table(folder, "stops"))
    trips = tuple(TripRow(r["route_id"], r["trip_id"], int(r.get("direction_id") or 0))
                  for r in _read_table(folder, "trips"))
    times = tuple(StopTimeRow(r["trip_id"], int(r["stop_sequence"]), r["stop_id"],
                              _opt_float(r.get("shape_dist_traveled")))
                  for r in _read_table(folder, "stop_times"))
    names = {r["route_id"]: r.get("route_short_name") or r["route_id"]
             for r in _read_table(folder, "routes", required=False)}
    return FeedTables(stops, trips, times, names)


def write_feed(feed: FeedTables, folder: str | Path) -> None:
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    with (folder / "stops.txt").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stop_id", "stop_name", "stop_lat", "stop_lon"])
        for s in feed.stops:
            w.writerow([s.stop_id, s.name, "" if s.lat is None else s.lat, "" if s.lon is None else s.lon])
    with (folder / "trips.txt").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["route_id", "trip_id", "direction_id"])
        for t in feed.trips:
            w.writerow([t.route_id, t.trip_id, t.direction])
    with (folder / "stop_times.txt").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trip_id", "stop_sequence", "stop_id", "shape_dist_traveled"])
        for st in feed.stop_times:
            w.writerow([st.trip_id, st.stop_sequence, st.stop_id,
                        "" if st.shape_dist_traveled is None else st.shape_dist_traveled])
    if feed.route_names:
        with (folder / "routes.txt").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["route_id", "route_short_name"])
            for rid, name in feed.route_names.items():
                w.writerow([rid, name])


def _trip_legs(trip_id: str, rows: list[StopTimeRow], stops: Mapping[str, BusStop],
               unit_to_miles: float) -> tuple[list[str], list[float]]:
    rows = sorted(rows, key=lambda r: r.stop_sequence)
    for a, b in zip(rows, rows[1:]):
        if b.stop_sequence <= a.stop_sequence:
            raise FeedError(f"trip {trip_id}: stop_sequence not strictly increasing")
    if len(rows) < 2:
        raise FeedError(f"trip {trip_id}: fewer than 2 stops")
    use_shape = all(r.shape_dist_traveled is not None for r in rows)
    seq = [rows[0].stop_id]
    dists: list[float] = []
    for a, b in zip(rows, rows[1:]):
        if use_shape:
            d = (b.shape_dist_traveled - a.shape_dist_traveled) * unit_to_miles
        else:
            d = geodesic_miles(stops[a.stop_id].coords, stops[b.stop_id].coords)
        if d <= 0:
            if b.stop_id == seq[-1]:
                continue
            raise FeedError(f"trip {trip_id}: non-positive distance between {a.stop_id} and {b.stop_id}")
        seq.append(b.stop_id)
        dists.append(d)
    return seq, dists


def _join(seq: list[str], dists: list[float], nxt: list[str], nxt_d: list[float],
          stops: Mapping[str, BusStop]) -> None:
    if nxt[0] != seq[-1]:
        gap = geodesic_miles(stops[seq[-1]].coords, stops[nxt[0]].coords)
        if gap > 0:
            seq.append(nxt[0])
            dists.append(gap)
    seq.extend(nxt[1:])
    dists.extend(nxt_d)


def build_routes(feed: FeedTables, cfg: SelectionConfig,
                 coach_classes: Mapping[str, CoachClass | str] | None = None,
                 dwell_hours: float | None = None) -> TransitNetwork:
    """Assemble one closed round-trip :class:`BusRoute` per filtered route.

    The representative trip of each direction is the one with the most stops
    (ties broken by trip id). Link distances come from ``shape_dist_traveled``
    when every row of the trip carries it, otherwise from the running haversine
    sum, which underestimates road distance.
    """
    coach_classes = coach_classes or {}
    stops: dict[str, BusStop] = {}
    for row in feed.stops:
        if row.lat is None or row.lon is None:
            continue
        stops[row.stop_id] = BusStop(row.stop_id, row.name, row.lat, row.lon)
    declared = {row.stop_id for row in feed.stops}

    by_trip: dict[str, list[StopTimeRow]] = defaultdict(list)
    for st in feed.stop_times:
        if st.stop_id not in stops:
            if st.stop_id in declared:
                raise FeedError(f"unresolvable stop {st.stop_id}: missing coordinates")
            raise FeedError(f"unresolvable stop {st.stop_id}: not in stops table")
        by_trip[st.trip_id].append(st)

    label_of = {rid: feed.route_names.get(rid, rid) for rid in {t.route_id for t in feed.trips}}
    trips_by_label: dict[str, list[TripRow]] = defaultdict(list)
    for t in feed.trips:
        trips_by_label[label_of[t.route_id]].append(t)

    wanted = sorted(trips_by_label, key=natural_key) if cfg.route_filter is None else list(cfg.route_filter)
    unit = _UNIT_TO_MILES[cfg.shape_dist_units]
    routes: list[BusRoute] = []
    for label in wanted:
        if label not in trips_by_label:
            raise FeedError(f"route {label} not present in feed")
        rep: dict[int, tuple[list[str], list[float]]] = {}
        for direction in sorted({t.direction for t in trips_by_label[label]}):
            cands = sorted((t for t in trips_by_label[label] if t.direction == direction),
                           key=lambda t: (-len(by_trip.get(t.trip_id, [])), natural_key(t.trip_id)))
            trip = cands[0]
            rep[direction] = _trip_legs(trip.trip_id, by_trip.get(trip.trip_id, []), stops, unit)
        dirs = sorted(rep)
        if len(dirs) < 2 and rep[dirs[0]][0][0] != rep[dirs[0]][0][-1]:
            raise FeedError(f"route {label}: no round-trip trip pair")
        seq, dists = list(rep[dirs[0]][0]), list(rep[dirs[0]][1])
        turnaround = len(seq) - 1
        if len(dirs) > 1:
            _join(seq, dists, rep[dirs[1]][0], rep[dirs[1]][1], stops)
        if seq[-1] != seq[0]:
            closing = geodesic_miles(stops[seq[-1]].coords, stops[seq[0]].coords)
            if closing > 0:
                seq.append(seq[0])
                dists.append(closing)
            else:
                seq[-1] = seq[0]
        coach = CoachClass.parse(coach_classes.get(label, CoachClass.FORTY_FOOT))
        kwargs = {}
        if dwell_hours is not None:
            kwargs["dwell_hours"] = (dwell_hours,) * len(seq)
        routes.append(BusRoute(label, tuple(seq), tuple(dists), coach, turnaround=min(turnaround, len(seq) - 1),
                               **kwargs))
    used = {s for r in routes for s in r.stops}
    return TransitNetwork({k: v for k, v in stops.items() if k in used}, tuple(routes))


def select_on_sequence(stop_ids: Sequence[str], cumulative_ft: Sequence[float],
                       threshold_ft: float) -> set[str]:
    """Rules 2 and 3 applied to one route's ordered stops.

    ``cumulative_ft[k]`` is the driving distance of position ``k`` from the
    origin. The last selected node's distance is tracked as it moves along.
    """
    if not stop_ids:
        return set()
    picked = {stop_ids[0], stop_ids[-1]}
    last = 0.0
    for k in range(1, len(stop_ids)):
        d = cumulative_ft[k]
        if d > last + threshold_ft:
            if d - cumulative_ft[k - 1] > threshold_ft:
                picked.update((stop_ids[k - 1], stop_ids[k]))
                last = d
            else:
                picked.add(stop_ids[k - 1])
                last = cumulative_ft[k - 1]
    return picked


def route_occurrences(routes: Iterable[BusRoute]) -> dict[str, int]:
    """Number of distinct routes serving each stop."""
    counts: dict[str, int] = defaultdict(int)
    for r in routes:
        for s in set(r.stops):
            counts[s] += 1
    return dict(counts)


def select_transport_nodes(net: TransitNetwork, cfg: SelectionConfig) -> set[str]:
    """Candidate charging nodes chosen by the origin/terminal, spacing and common-stop rules.

    Routes outside ``cfg.route_filter`` are ignored; an empty filter selects nothing.
    Stops on opposite sides of a street keep their own feed ids and are never merged.
    """
    routes = [r for r in net.routes if cfg.route_filter is None or r.id in cfg.route_filter]
    selected: set[str] = set()
    for r in routes:
        cum_ft = [c * FEET_PER_MILE for c in r.cumulative_miles()]
        selected |= select_on_sequence(r.stops, cum_ft, cfg.distance_threshold_ft)
        if r.turnaround is not None:
            selected.add(r.stops[r.turnaround])
    for stop, n in route_occurrences(routes).items():
        if n > cfg.common_stop_min_routes:
            selected.add(stop)
    return selected
