"""Zone bookkeeping and Jain's fairness index over BEB route coverage."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from .core import TransitNetwork, ValidationError, natural_key, rebuild_reduce

OUTSIDE = "__outside__"


class FairnessError(ValidationError):
    pass


@dataclass(frozen=True)
class ZonePartition:
    """Share of every route link falling in each zone.

    ``link_weights[(route_id, link_index)]`` lists ``(zone, weight)`` pairs
    summing to one. Weight assigned to :data:`OUTSIDE` is excluded from every
    zone, so it never enters ``H``.
    """

    zone_names: tuple[str, ...]
    link_weights: Mapping[tuple[str, int], tuple[tuple[str, float], ...]]

    __reduce__ = rebuild_reduce

    def __post_init__(self):
        names = tuple(str(z) for z in self.zone_names)
        object.__setattr__(self, "zone_names", names)
        if len(set(names)) != len(names):
            raise FairnessError("duplicate zone names")
        if len(names) < 2:
            raise FairnessError("a partition needs at least two zones")
        known = set(names) | {OUTSIDE}
        clean = {}
        for key, pairs in self.link_weights.items():
            pairs = tuple((str(z), float(w)) for z, w in pairs)
            if any(w < 0 for _, w in pairs):
                raise FairnessError(f"negative zone weight on link {key}")
            if abs(sum(w for _, w in pairs) - 1.0) > 1e-9:
                raise FairnessError(f"zone weights on link {key} do not sum to 1")
            unknown = [z for z, _ in pairs if z not in known]
            if unknown:
                raise FairnessError(f"link {key} refers to undeclared zone {unknown[0]}")
            clean[(str(key[0]), int(key[1]))] = pairs
        object.__setattr__(self, "link_weights", MappingProxyType(clean))

    @property
    def zone_count(self) -> int:
        return len(self.zone_names)

    def outside_miles(self, net: TransitNetwork) -> float:
        total = 0.0
        for r in net.routes:
            for k, d in enumerate(r.link_distances):
                total += d * dict(self.link_weights.get((r.id, k), ())).get(OUTSIDE, 0.0)
        return total


def _route_zone_miles(net: TransitNetwork, part: ZonePartition) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    for r in net.routes:
        acc: dict[str, float] = defaultdict(float)
        for k, d in enumerate(r.link_distances):
            try:
                pairs = part.link_weights[(r.id, k)]
            except KeyError:
                raise FairnessError(f"link {k} of route {r.id} is not covered by the zone partition") from None
            for z, w in pairs:
                if z != OUTSIDE:
                    acc[z] += w * d
        out[r.id] = dict(acc)
    return out


def zone_denominators(net: TransitNetwork, part: ZonePartition) -> dict[str, float]:
    """Total route miles inside each zone, weighting crossing links by their shares."""
    per_route = _route_zone_miles(net, part)
    return {z: math.fsum(m.get(z, 0.0) for m in per_route.values()) for z in part.zone_names}


def zone_route_shares(net: TransitNetwork, part: ZonePartition) -> dict[str, dict[str, float]]:
    """``shares[route][zone]``: contribution of a route to the zone ratio when it is electrified."""
    per_route = _route_zone_miles(net, part)
    den = zone_denominators(net, part)
    for z, d in den.items():
        if d <= 0:
            raise FairnessError(f"empty zone {z}")
    return {rid: {z: m.get(z, 0.0) / den[z] for z in part.zone_names} for rid, m in per_route.items()}


def zone_ratios(selected: Iterable[str], net: TransitNetwork, part: ZonePartition) -> dict[str, float]:
    """Electrified share of route miles in each zone."""
    shares = zone_route_shares(net, part)
    chosen = set(selected)
    unknown = chosen - set(shares)
    if unknown:
        raise FairnessError(f"unknown route {sorted(unknown)[0]}")
    return {z: math.fsum(shares[r][z] for r in chosen) for z in part.zone_names}


def jain_index(w: Sequence[float], H: int | None = None) -> float:
    """``(sum w)^2 / (H * sum w^2)``. Lies in ``[1/H, 1]``; 1 means equal allocation."""
    w = [float(v) for v in w]
    H = len(w) if H is None else H
    if any(v < 0 for v in w):
        raise FairnessError("allocations must be non-negative")
    top = max(w, default=0.0)
    if top == 0:
        raise FairnessError("undefined index for an all-zero allocation")
    # the index is scale free; normalizing keeps tiny allocations from underflowing
    w = [v / top for v in w]
    return math.fsum(w) ** 2 / (H * math.fsum(v * v for v in w))


def load_zone_file(path: str | Path) -> ZonePartition:
    """Read ``route_id, link_index, zone_id, weight`` rows."""
    weights: dict[tuple[str, int], list[tuple[str, float]]] = defaultdict(list)
    zones: set[str] = set()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            z = row["zone_id"].strip()
            weights[(row["route_id"].strip(), int(row["link_index"]))].append((z, float(row["weight"])))
            if z != OUTSIDE:
                zones.add(z)
    return ZonePartition(tuple(sorted(zones, key=natural_key)), {k: tuple(v) for k, v in weights.items()})


def write_zone_file(part: ZonePartition, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["route_id", "link_index", "zone_id", "weight"])
        for (rid, k), pairs in sorted(part.link_weights.items(), key=lambda kv: (natural_key(kv[0][0]), kv[0][1])):
            for z, wt in pairs:
                w.writerow([rid, k, z, wt])


def _inside(pt: tuple[float, float], poly: Sequence[tuple[float, float]]) -> bool:
    # even-odd ray casting in (lat, lon) plane
    y, x = pt
    inside = False
    n = len(poly)
    for i in range(n):
        y1, x1 = poly[i]
        y2, x2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xc:
                inside = not inside
    return inside


def _zone_of(pt, polygons: Mapping[str, Sequence[tuple[float, float]]]) -> str:
    for z in sorted(polygons, key=natural_key):
        if _inside(pt, polygons[z]):
            return z
    return OUTSIDE


def partition_from_polygons(net: TransitNetwork, polygons: Mapping[str, Sequence[tuple[float, float]]]) -> ZonePartition:
    """Assign links to polygon zones.

    A link whose endpoints share a zone goes wholly to the zone holding its
    midpoint; a link whose endpoints fall in different zones is split 50/50
    between them. Uncovered pieces go to :data:`OUTSIDE`.
    """
    weights = {}
    for r in net.routes:
        for k in range(len(r.link_distances)):
            a, b = net.stops[r.stops[k]].coords, net.stops[r.stops[k + 1]].coords
            za, zb = _zone_of(a, polygons), _zone_of(b, polygons)
            if za == zb:
                mid = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
                weights[(r.id, k)] = ((_zone_of(mid, polygons), 1.0),)
            else:
                weights[(r.id, k)] = ((za, 0.5), (zb, 0.5))
    return ZonePartition(tuple(sorted(polygons, key=natural_key)), weights)


def load_zone_polygons(path: str | Path) -> dict[str, list[tuple[float, float]]]:
    """Read ``zone_id, vertices`` rows, vertices as ``lat lon;lat lon;...``."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            pts = []
            for pair in row["vertices"].split(";"):
                if pair.strip():
                    lat, lon = pair.split()
                    pts.append((float(lat), float(lon)))
            out[row["zone_id"].strip()] = pts
    return out


def write_zone_polygons(polygons: Mapping[str, Sequence[tuple[float, float]]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["zone_id", "vertices"])
        for z, pts in polygons.items():
            w.writerow([z, ";".join(f"{lat} {lon}" for lat, lon in pts)])
