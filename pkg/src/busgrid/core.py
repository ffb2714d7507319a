"""Domain types shared by the transit, grid, model and solver layers.

All types are frozen dataclasses; collections are stored as tuples or
read-only mappings so instances can be shared between worker processes.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field, fields
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

EARTH_RADIUS_MILES = 3958.7613
FEET_PER_MILE = 5280.0
KM_PER_MILE = 1.609344

DEFAULT_DWELL_HOURS = 0.2  # 12 minutes
DEFAULT_POWER_FACTOR = 0.95


class ValidationError(ValueError):
    """Raised when input data violates a type invariant."""


def rebuild_reduce(obj):
    """``__reduce__`` for frozen dataclasses holding read-only mappings: re-run the constructor."""
    args = []
    for f in fields(obj):
        if f.name.startswith("_"):
            continue
        v = getattr(obj, f.name)
        args.append(dict(v) if isinstance(v, MappingProxyType) else v)
    return type(obj), tuple(args)


def natural_key(stop_id: str) -> tuple:
    """Sort key ordering ``"2" < "10" < "a"`` so numeric feed ids sort as numbers."""
    parts = re.split(r"(\d+)", str(stop_id))
    return tuple((0, int(p)) if p.isdigit() else (1, p) for p in parts if p != "")


def geodesic_miles(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle (haversine) distance in miles between two ``(lat, lon)`` pairs."""
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2.0 * EARTH_RADIUS_MILES * math.asin(min(1.0, math.sqrt(h)))


def _check_coords(what: str, lat: float, lon: float) -> None:
    if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0) or math.isnan(lat) or math.isnan(lon):
        raise ValidationError(f"{what}: coordinates out of range ({lat}, {lon})")


class CoachClass(enum.Enum):
    FORTY_FOOT = "40ft"
    SIXTY_FOOT = "60ft"

    @property
    def defaults(self) -> "CoachSpec":
        return COACH_DEFAULTS[self]

    @classmethod
    def parse(cls, value: "str | CoachClass") -> "CoachClass":
        if isinstance(value, CoachClass):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {"40ft": cls.FORTY_FOOT, "40": cls.FORTY_FOOT, "fortyfoot": cls.FORTY_FOOT,
                   "60ft": cls.SIXTY_FOOT, "60": cls.SIXTY_FOOT, "sixtyfoot": cls.SIXTY_FOOT}
        try:
            return aliases[key]
        except KeyError:
            raise ValidationError(f"unknown coach class {value!r}") from None


@dataclass(frozen=True)
class CoachSpec:
    battery_kwh: float
    consumption_kwh_per_mile: float
    charger_kw: float


COACH_DEFAULTS = {
    CoachClass.FORTY_FOOT: CoachSpec(313.0, 1.99, 150.0),
    CoachClass.SIXTY_FOOT: CoachSpec(578.0, 3.74, 200.0),
}


@dataclass(frozen=True)
class BusStop:
    id: str
    name: str
    lat: float
    lon: float

    def __post_init__(self):
        _check_coords(f"stop {self.id}", self.lat, self.lon)

    @property
    def coords(self) -> tuple[float, float]:
        return (self.lat, self.lon)


@dataclass(frozen=True)
class BusRoute:
    """A closed round trip: ``stops[0] == stops[-1]`` is the origin station.

    ``link_distances[k]`` is the driving distance in miles from ``stops[k]`` to
    ``stops[k + 1]``; ``dwell_hours[k]`` is the maximum dwell at position ``k``.
    ``turnaround`` optionally marks the position where the outbound direction
    ends, used as the route terminal by node selection.
    """

    id: str
    stops: tuple[str, ...]
    link_distances: tuple[float, ...]
    coach_class: CoachClass = CoachClass.FORTY_FOOT
    battery_kwh: float = 0.0
    consumption_kwh_per_mile: float = 0.0
    charger_kw: float = 0.0
    dwell_hours: tuple[float, ...] = ()
    turnaround: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "stops", tuple(str(s) for s in self.stops))
        object.__setattr__(self, "link_distances", tuple(float(d) for d in self.link_distances))
        object.__setattr__(self, "coach_class", CoachClass.parse(self.coach_class))
        spec = self.coach_class.defaults
        if not self.battery_kwh:
            object.__setattr__(self, "battery_kwh", spec.battery_kwh)
        if not self.consumption_kwh_per_mile:
            object.__setattr__(self, "consumption_kwh_per_mile", spec.consumption_kwh_per_mile)
        if not self.charger_kw:
            object.__setattr__(self, "charger_kw", spec.charger_kw)
        if not self.dwell_hours:
            object.__setattr__(self, "dwell_hours", (DEFAULT_DWELL_HOURS,) * len(self.stops))
        else:
            object.__setattr__(self, "dwell_hours", tuple(float(t) for t in self.dwell_hours))

        if len(self.stops) < 2:
            raise ValidationError(f"route {self.id}: degenerate route")
        if self.stops[0] != self.stops[-1]:
            raise ValidationError(f"route {self.id}: round trip must return to its origin {self.stops[0]}")
        if len(self.link_distances) != len(self.stops) - 1:
            raise ValidationError(f"route {self.id}: expected {len(self.stops) - 1} link distances")
        if any(not d > 0 for d in self.link_distances):
            raise ValidationError(f"route {self.id}: link distances must be positive")
        if len(self.dwell_hours) != len(self.stops) or any(t < 0 for t in self.dwell_hours):
            raise ValidationError(f"route {self.id}: one non-negative dwell time per stop position required")
        if self.battery_kwh <= 0 or self.consumption_kwh_per_mile <= 0 or self.charger_kw <= 0:
            raise ValidationError(f"route {self.id}: battery, consumption and charger power must be positive")
        if self.turnaround is not None and not 0 <= self.turnaround < len(self.stops):
            raise ValidationError(f"route {self.id}: turnaround index out of range")

    @property
    def origin(self) -> str:
        return self.stops[0]

    @property
    def trip_energy_kwh(self) -> float:
        return self.consumption_kwh_per_mile * route_roundtrip_miles(self)

    @property
    def charge_per_stop_kwh(self) -> tuple[float, ...]:
        return tuple(self.charger_kw * t for t in self.dwell_hours)

    def cumulative_miles(self) -> list[float]:
        out = [0.0]
        for d in self.link_distances:
            out.append(out[-1] + d)
        return out

    def links(self) -> list[tuple[str, str, float]]:
        return [(self.stops[k], self.stops[k + 1], self.link_distances[k]) for k in range(len(self.link_distances))]


def route_roundtrip_miles(route: BusRoute) -> float:
    """Total driving distance of the closed stop sequence."""
    if len(route.stops) < 2 or not route.link_distances:
        raise ValidationError(f"route {route.id}: degenerate route")
    return math.fsum(route.link_distances)


@dataclass(frozen=True)
class TransitNetwork:
    stops: Mapping[str, BusStop]
    routes: tuple[BusRoute, ...]
    candidate_nodes: frozenset[str] = frozenset()

    __reduce__ = rebuild_reduce

    def __post_init__(self):
        stops = self.stops
        if not isinstance(stops, Mapping):
            stops = {s.id: s for s in stops}
            if len(stops) != len(self.stops):
                raise ValidationError("duplicate stop ids")
        object.__setattr__(self, "stops", MappingProxyType(dict(stops)))
        object.__setattr__(self, "routes", tuple(self.routes))
        object.__setattr__(self, "candidate_nodes", frozenset(str(c) for c in self.candidate_nodes))
        ids = [r.id for r in self.routes]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate route ids")
        for r in self.routes:
            missing = [s for s in r.stops if s not in self.stops]
            if missing:
                raise ValidationError(f"route {r.id} references unknown stop {missing[0]}")
        extra = self.candidate_nodes - set(self.stops)
        if extra:
            raise ValidationError(f"candidate node {sorted(extra)[0]} is not a stop")

    def route(self, route_id: str) -> BusRoute:
        for r in self.routes:
            if r.id == route_id:
                return r
        raise KeyError(route_id)

    def with_candidates(self, candidates: Iterable[str]) -> "TransitNetwork":
        return TransitNetwork(self.stops, self.routes, frozenset(candidates))

    def sorted_candidates(self) -> list[str]:
        return sorted(self.candidate_nodes, key=natural_key)


@dataclass(frozen=True)
class PowerNode:
    id: str
    lat: float
    lon: float
    load_p_pu: float = 0.0
    load_q_pu: float | None = None
    vmin_sq_pu: float = 0.81
    vmax_sq_pu: float = 1.21

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        _check_coords(f"power node {self.id}", self.lat, self.lon)
        if self.load_q_pu is None:
            q = self.load_p_pu * math.tan(math.acos(DEFAULT_POWER_FACTOR))
            object.__setattr__(self, "load_q_pu", q)
        if self.load_p_pu < 0 or self.load_q_pu < 0:
            raise ValidationError(f"power node {self.id}: negative load")
        if not 0 < self.vmin_sq_pu < self.vmax_sq_pu:
            raise ValidationError(f"power node {self.id}: need 0 < vmin_sq < vmax_sq")

    @property
    def coords(self) -> tuple[float, float]:
        return (self.lat, self.lon)


@dataclass(frozen=True)
class PowerBranch:
    from_id: str
    to_id: str
    r_pu: float
    x_pu: float
    current_sq_limit_pu: float
    length_miles: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "from_id", str(self.from_id))
        object.__setattr__(self, "to_id", str(self.to_id))
        if not self.r_pu > 0 or self.x_pu < 0 or not self.current_sq_limit_pu > 0:
            raise ValidationError(f"branch {self.from_id}-{self.to_id}: need r > 0, x >= 0, limit > 0")

    @property
    def key(self) -> tuple[str, str]:
        return (self.from_id, self.to_id)


@dataclass(frozen=True)
class PowerGrid:
    """Radial grid with branches oriented away from ``slack_id``."""

    nodes: tuple[PowerNode, ...]
    branches: tuple[PowerBranch, ...]
    slack_id: str
    v_slack_sq_pu: float = 1.0
    base_mva: float = 10.0
    base_kv: float = 110.0
    _parent: Mapping[str, PowerBranch] = field(default=None, repr=False, compare=False)

    __reduce__ = rebuild_reduce

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "slack_id", str(self.slack_id))
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate power node ids")
        if self.slack_id not in ids:
            raise ValidationError(f"slack node {self.slack_id} not in grid")
        parent: dict[str, PowerBranch] = {}
        idset = set(ids)
        for b in self.branches:
            if b.from_id not in idset or b.to_id not in idset:
                raise ValidationError(f"branch {b.key} references unknown node")
            if b.to_id in parent or b.to_id == self.slack_id:
                raise ValidationError("topology not radial")
            parent[b.to_id] = b
        if len(self.branches) != len(self.nodes) - 1:
            raise ValidationError("topology not radial")
        # every node must reach the slack by walking parents
        for n in ids:
            seen = set()
            cur = n
            while cur != self.slack_id:
                if cur in seen or cur not in parent:
                    raise ValidationError("topology not radial")
                seen.add(cur)
                cur = parent[cur].from_id
        object.__setattr__(self, "_parent", MappingProxyType(parent))

    @property
    def base_kw(self) -> float:
        return self.base_mva * 1000.0

    def node(self, node_id: str) -> PowerNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def parent_branch(self, node_id: str) -> PowerBranch | None:
        return self._parent.get(node_id)

    def children(self, node_id: str) -> list[PowerBranch]:
        return [b for b in self.branches if b.from_id == node_id]

    def bfs_order(self) -> list[str]:
        """Node ids from the slack outward; every parent precedes its children."""
        order = [self.slack_id]
        i = 0
        kids: dict[str, list[str]] = {}
        for b in self.branches:
            kids.setdefault(b.from_id, []).append(b.to_id)
        while i < len(order):
            order.extend(sorted(kids.get(order[i], []), key=natural_key))
            i += 1
        return order


@dataclass(frozen=True)
class EconomicParams:
    station_cost: float = 200_000.0
    pile_cost: float = 25_000.0
    line_cost_per_mile: float = 390_000.0
    loss_hours_per_day: float = 15.0
    planning_days: float = 3650.0
    electricity_price: float = 0.20

    def __post_init__(self):
        for name in ("station_cost", "pile_cost", "line_cost_per_mile", "loss_hours_per_day",
                     "planning_days", "electricity_price"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"economic parameter {name} must be positive")

    @property
    def loss_hours_total(self) -> float:
        return self.loss_hours_per_day * self.planning_days


@dataclass(frozen=True)
class BatteryPolicy:
    soc_init: float = 0.1
    soc_min: float = 0.1
    soc_max: float = 0.9
    big_m: int = 45

    def __post_init__(self):
        if not 0 <= self.soc_min <= self.soc_init <= self.soc_max <= 1:
            raise ValidationError("battery policy needs 0 <= soc_min <= soc_init <= soc_max <= 1")
        if int(self.big_m) != self.big_m or self.big_m < 1:
            raise ValidationError("big_m must be a positive integer")


def coords_of(items: Sequence) -> list[tuple[float, float]]:
    return [(it.lat, it.lon) for it in items]
