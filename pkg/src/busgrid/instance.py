"""The complete solver input: both networks, coupling candidates and parameters."""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import BatteryPolicy, BusRoute, EconomicParams, PowerGrid, TransitNetwork, ValidationError, natural_key
from .fairness import ZonePartition
from .gridsynth import CouplingCandidate


class InfeasibleInstance(ValidationError):
    pass


@dataclass(frozen=True)
class FairnessSettings:
    partition: ZonePartition
    eta: float
    i_max: int
    # "exact" electrifies exactly i_max routes; "at_most" allows fewer
    budget: str = "exact"

    def __post_init__(self):
        H = self.partition.zone_count
        if self.eta != 0 and not (1.0 / H - 1e-12 <= self.eta <= 1.0):
            raise ValidationError("fairness level out of range")
        if self.i_max < 1:
            raise ValidationError("i_max must be >= 1")
        if self.budget not in ("exact", "at_most"):
            raise ValidationError(f"unknown budget mode {self.budget!r}")


@dataclass(frozen=True)
class RouteSegments:
    """Positions of a route where the energy state is tracked.

    Kept positions are the origin, the final return and every candidate stop
    in between; runs of non-candidate stops are merged into the adjacent link
    since no charging can happen there. ``link_miles[k]`` joins kept positions
    ``k`` and ``k + 1``.
    """

    route_id: str
    positions: tuple[int, ...]
    stop_ids: tuple[str, ...]
    link_miles: tuple[float, ...]
    chargeable: tuple[bool, ...]
    dwell_hours: tuple[float, ...]

    def charge_stops(self) -> list[str]:
        seen = []
        for s, ok in zip(self.stop_ids, self.chargeable):
            if ok and s not in seen:
                seen.append(s)
        return seen


def route_segments(route: BusRoute, candidates: frozenset[str]) -> RouteSegments:
    last = len(route.stops) - 1
    keep = [k for k in range(len(route.stops)) if k == 0 or k == last or route.stops[k] in candidates]
    cum = route.cumulative_miles()
    links = tuple(cum[b] - cum[a] for a, b in zip(keep, keep[1:]))
    stops = tuple(route.stops[k] for k in keep)
    chargeable = tuple(route.stops[k] in candidates and k != last for k in keep)
    dwell = tuple(route.dwell_hours[k] for k in keep)
    return RouteSegments(route.id, tuple(keep), stops, links, chargeable, dwell)


@dataclass(frozen=True)
class PlanningInstance:
    network: TransitNetwork
    grid: PowerGrid
    couplings: tuple[CouplingCandidate, ...]
    econ: EconomicParams = field(default_factory=EconomicParams)
    battery: BatteryPolicy = field(default_factory=BatteryPolicy)
    fairness: FairnessSettings | None = None

    def __post_init__(self):
        object.__setattr__(self, "couplings", tuple(self.couplings))
        nodes = {n.id for n in self.grid.nodes}
        for c in self.couplings:
            if c.power_node_id not in nodes:
                raise ValidationError(f"coupling references unknown power node {c.power_node_id}")
            if c.stop_id not in self.network.candidate_nodes:
                raise ValidationError(f"coupling references non-candidate stop {c.stop_id}")

    @property
    def candidates(self) -> list[str]:
        return self.network.sorted_candidates()

    @property
    def routes(self) -> tuple[BusRoute, ...]:
        return self.network.routes

    def segments(self) -> dict[str, RouteSegments]:
        return {r.id: route_segments(r, self.network.candidate_nodes) for r in self.routes}

    def couplings_of(self, stop_id: str) -> list[CouplingCandidate]:
        return sorted((c for c in self.couplings if c.stop_id == stop_id), key=lambda c: natural_key(c.power_node_id))

    def replace(self, **changes) -> "PlanningInstance":
        from dataclasses import replace

        return replace(self, **changes)

    def check_links(self, strict: bool = True) -> list[str]:
        """Structural feasibility checks run before any solve.

        Returns messages for routes that cannot complete their round trip;
        raises :class:`InfeasibleInstance` on the first one when ``strict``.
        """
        problems = []
        b = self.battery
        for r in self.routes:
            seg = route_segments(r, self.network.candidate_nodes)
            usable = (b.soc_max - b.soc_min) * r.battery_kwh
            for k, d in enumerate(seg.link_miles):
                need = r.consumption_kwh_per_mile * d
                if need > usable + 1e-9:
                    problems.append(f"infeasible link: route {r.id} needs {need:.2f} kWh between "
                                    f"{seg.stop_ids[k]} and {seg.stop_ids[k + 1]}, usable battery {usable:.2f} kWh")
                    break
            else:
                first = r.consumption_kwh_per_mile * seg.link_miles[0]
                if not seg.chargeable[0] and first > (b.soc_init - b.soc_min) * r.battery_kwh + 1e-9:
                    problems.append(f"infeasible link: route {r.id} cannot reach {seg.stop_ids[1]} from its "
                                    f"origin {r.origin}, which is not a charging candidate")
            if strict and problems:
                raise InfeasibleInstance(problems[0])
        return problems
