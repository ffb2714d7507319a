"""South King County reference data: the 15 planned routes and the 24 coupled anchor stops."""

from __future__ import annotations

from dataclasses import dataclass

from .core import DEFAULT_DWELL_HOURS, BusRoute, CoachClass


@dataclass(frozen=True)
class BenchmarkRoute:
    route_id: str
    roundtrip_miles: float
    charger_kw: float
    # published on-route charge counts for departure SOC 0.1, 0.2, 0.3, 0.4 and >= 0.5
    charges: tuple[int, int, int, int, int]

    @property
    def coach_class(self) -> CoachClass:
        return CoachClass.FORTY_FOOT if self.charger_kw == 150 else CoachClass.SIXTY_FOOT


BENCHMARK_SOC_LEVELS = (0.1, 0.2, 0.3, 0.4, 0.5)

BENCHMARK_ROUTES = (
    BenchmarkRoute("22", 13.82, 150, (1, 0, 0, 0, 0)),
    BenchmarkRoute("101", 28.28, 200, (3, 2, 0, 0, 0)),
    BenchmarkRoute("102", 47.81, 200, (5, 4, 2, 1, 0)),
    BenchmarkRoute("111", 52.34, 200, (5, 4, 3, 1, 0)),
    BenchmarkRoute("150", 44.18, 200, (5, 3, 2, 0, 0)),
    BenchmarkRoute("153", 16.37, 150, (2, 1, 0, 0, 0)),
    BenchmarkRoute("156", 25.04, 150, (2, 1, 0, 0, 0)),
    BenchmarkRoute("168", 24.35, 150, (2, 1, 0, 0, 0)),
    BenchmarkRoute("177", 48.66, 200, (5, 4, 2, 1, 0)),
    BenchmarkRoute("181", 30.08, 150, (2, 1, 0, 0, 0)),
    BenchmarkRoute("182", 15.10, 150, (1, 0, 0, 0, 0)),
    BenchmarkRoute("183", 21.79, 150, (2, 1, 0, 0, 0)),
    BenchmarkRoute("187", 11.81, 150, (1, 0, 0, 0, 0)),
    BenchmarkRoute("190", 41.79, 200, (4, 3, 2, 0, 0)),
    BenchmarkRoute("193", 50.62, 200, (5, 4, 2, 1, 0)),
)

# (power node, transportation node, latitude, longitude)
COUPLED_ANCHORS = (
    ("1", "1", 47.6167107, -122.3306), ("2", "7", 47.545311, -122.38711),
    ("3", "8", 47.5168533, -122.3769), ("4", "10", 47.5933418, -122.32896),
    ("5", "17", 47.3099785, -122.36103), ("6", "19", 47.4798775, -122.20813),
    ("7", "20", 47.3871994, -122.30184), ("8", "21", 47.3584251, -122.29468),
    ("9", "22", 47.4379692, -122.32423), ("10", "26", 47.4877625, -122.14824),
    ("11", "31", 47.3848267, -122.2327), ("12", "37", 47.4413147, -122.24831),
    ("13", "39", 47.2959099, -122.24944), ("14", "41", 47.315258, -122.17787),
    ("15", "43", 47.4843712, -122.27198), ("16", "46", 47.4468002, -122.17017),
    ("17", "49", 47.4616432, -122.14659), ("18", "50", 47.3127861, -122.30338),
    ("19", "53", 47.2948532, -122.38205), ("20", "55", 47.3651619, -122.01903),
    ("21", "56", 47.358078, -122.14958), ("22", "57", 47.3667755, -122.10149),
    ("23", "69", 47.5571404, -122.18928), ("24", "76", 47.5722656, -122.32739),
)


def benchmark_route(b: BenchmarkRoute, n_links: int = 40) -> BusRoute:
    """Stand-in :class:`BusRoute` with the benchmark's length split into equal links.

    Only the round-trip length, coach class and dwell matter to the charge-count
    closed form, so stop geometry is synthetic.
    """
    stops = tuple(f"{b.route_id}-{k}" for k in range(n_links)) + (f"{b.route_id}-0",)
    links = (b.roundtrip_miles / n_links,) * n_links
    return BusRoute(b.route_id, stops, links, b.coach_class, charger_kw=b.charger_kw,
                    dwell_hours=(DEFAULT_DWELL_HOURS,) * len(stops))
