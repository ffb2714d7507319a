import math
import pickle

import pytest
from hypothesis import given
from hypothesis import strategies as st

from busgrid.benchmarks import BENCHMARK_ROUTES, COUPLED_ANCHORS, benchmark_route
from busgrid.core import (
    EARTH_RADIUS_MILES,
    BatteryPolicy,
    BusRoute,
    BusStop,
    CoachClass,
    EconomicParams,
    PowerBranch,
    PowerGrid,
    PowerNode,
    TransitNetwork,
    ValidationError,
    geodesic_miles,
    natural_key,
    route_roundtrip_miles,
)
from busgrid.synthetic import five_node_feeder

lat = st.floats(-89.9, 89.9)
lon = st.floats(-179.9, 179.9)
point = st.tuples(lat, lon)


def test_same_point_is_zero():
    assert geodesic_miles((47.6167, -122.3306), (47.6167, -122.3306)) == 0.0


def test_antipodal_half_circumference():
    assert geodesic_miles((0, 0), (0, 180)) == pytest.approx(math.pi * EARTH_RADIUS_MILES, abs=1e-9)
    assert geodesic_miles((0, 0), (0, 180)) == pytest.approx(12436.8154, abs=1e-2)


def test_anchor_pair_distance():
    a = COUPLED_ANCHORS[0][2:]
    b = COUPLED_ANCHORS[1][2:]
    d = geodesic_miles(a, b)
    assert d == geodesic_miles(b, a)
    assert 4 < d < 6


@given(point, point)
def test_symmetric_nonnegative(a, b):
    d = geodesic_miles(a, b)
    assert d >= 0
    assert d == geodesic_miles(b, a)


@given(point, point, point)
def test_triangle_inequality(a, b, c):
    ab, bc, ac = geodesic_miles(a, b), geodesic_miles(b, c), geodesic_miles(a, c)
    assert ac <= (ab + bc) * (1 + 1e-9) + 1e-9


@given(point)
def test_zero_only_for_identical(a):
    b = (a[0] + 1e-3, a[1])
    assert geodesic_miles(a, b) > 0


def test_roundtrip_of_benchmarks():
    lengths = {b.route_id: b.roundtrip_miles for b in BENCHMARK_ROUTES}
    assert route_roundtrip_miles(benchmark_route(BENCHMARK_ROUTES[0])) == pytest.approx(lengths["22"], abs=1e-12)
    r111 = next(b for b in BENCHMARK_ROUTES if b.route_id == "111")
    assert route_roundtrip_miles(benchmark_route(r111)) == pytest.approx(52.34, abs=1e-12)


def test_single_link_out_and_back():
    r = BusRoute("x", ("A", "B", "A"), (5.0, 5.0))
    assert route_roundtrip_miles(r) == 10


def test_degenerate_route():
    with pytest.raises(ValidationError, match="degenerate route"):
        BusRoute("x", ("A",), ())


@given(st.lists(st.floats(0.1, 20.0), min_size=2, max_size=12), st.integers(0, 20))
def test_roundtrip_rotation_invariant(dists, shift):
    n = len(dists)
    stops = [f"s{k}" for k in range(n)]
    r = BusRoute("r", tuple(stops + [stops[0]]), tuple(dists))
    k = shift % n
    rot_stops = stops[k:] + stops[:k]
    rot = BusRoute("r", tuple(rot_stops + [rot_stops[0]]), tuple(dists[k:] + dists[:k]))
    assert route_roundtrip_miles(rot) == pytest.approx(route_roundtrip_miles(r), rel=1e-12)


def test_route_invariants():
    with pytest.raises(ValidationError):
        BusRoute("x", ("A", "B", "C"), (1.0, 1.0))
    with pytest.raises(ValidationError):
        BusRoute("x", ("A", "B", "A"), (1.0, 0.0))
    with pytest.raises(ValidationError):
        BusRoute("x", ("A", "B", "A"), (1.0,))
    with pytest.raises(ValidationError):
        BusRoute("x", ("A", "B", "A"), (1.0, 1.0), dwell_hours=(0.2, -0.1, 0.2))


def test_coach_defaults():
    r40 = BusRoute("a", ("A", "B", "A"), (1.0, 1.0))
    r60 = BusRoute("b", ("A", "B", "A"), (1.0, 1.0), CoachClass.SIXTY_FOOT)
    assert (r40.battery_kwh, r40.consumption_kwh_per_mile, r40.charger_kw) == (313, 1.99, 150)
    assert (r60.battery_kwh, r60.consumption_kwh_per_mile, r60.charger_kw) == (578, 3.74, 200)
    assert r40.charge_per_stop_kwh[0] == pytest.approx(30.0)
    assert CoachClass.parse("60ft") is CoachClass.SIXTY_FOOT


def test_stop_coordinates_checked():
    with pytest.raises(ValidationError):
        BusStop("a", "", 91.0, 0.0)
    with pytest.raises(ValidationError):
        BusStop("a", "", 0.0, -181.0)


def test_network_references():
    stops = [BusStop("A", "", 47.0, -122.0), BusStop("B", "", 47.01, -122.0)]
    r = BusRoute("r", ("A", "B", "A"), (1.0, 1.0))
    TransitNetwork(stops, (r,), frozenset({"A"}))
    with pytest.raises(ValidationError):
        TransitNetwork(stops[:1], (r,))
    with pytest.raises(ValidationError):
        TransitNetwork(stops, (r,), frozenset({"Z"}))


def test_power_types():
    with pytest.raises(ValidationError):
        PowerNode("1", 47.0, -122.0, 0.1, 0.0, 1.2, 0.8)
    with pytest.raises(ValidationError):
        PowerNode("1", 47.0, -122.0, -0.1)
    with pytest.raises(ValidationError):
        PowerBranch("1", "2", 0.0, 0.1, 1.0)
    n = PowerNode("2", 47.0, -122.0, 0.095)
    # power factor 0.95 lagging when reactive load is omitted
    assert n.load_q_pu == pytest.approx(0.095 * math.tan(math.acos(0.95)))


def test_grid_must_be_radial():
    nodes = tuple(PowerNode(str(i), 47.0 + i / 100, -122.0) for i in range(1, 4))
    ok = (PowerBranch("1", "2", 0.01, 0.01, 1.0), PowerBranch("2", "3", 0.01, 0.01, 1.0))
    g = PowerGrid(nodes, ok, "1")
    assert g.bfs_order() == ["1", "2", "3"]
    with pytest.raises(ValidationError, match="topology not radial"):
        PowerGrid(nodes, (ok[0], PowerBranch("3", "2", 0.01, 0.01, 1.0)), "1")
    with pytest.raises(ValidationError, match="topology not radial"):
        PowerGrid(nodes, (ok[0],), "1")


def test_parameter_defaults():
    e = EconomicParams()
    assert (e.station_cost, e.pile_cost, e.line_cost_per_mile) == (200_000, 25_000, 390_000)
    assert e.loss_hours_total == 15 * 3650 and e.electricity_price == 0.20
    b = BatteryPolicy()
    assert (b.soc_min, b.soc_max, b.big_m) == (0.1, 0.9, 45)
    with pytest.raises(ValidationError):
        EconomicParams(station_cost=0)
    with pytest.raises(ValidationError):
        BatteryPolicy(soc_init=0.05)
    with pytest.raises(ValidationError):
        BatteryPolicy(big_m=0)


def test_natural_key_order():
    assert sorted(["10", "2", "a", "1"], key=natural_key) == ["1", "2", "10", "a"]


def test_immutable_types_pickle():
    g = five_node_feeder()
    g2 = pickle.loads(pickle.dumps(g))
    assert g2 == g and g2.parent_branch("5").from_id == "4"
    stops = [BusStop("A", "", 47.0, -122.0), BusStop("B", "", 47.01, -122.0)]
    net = TransitNetwork(stops, (BusRoute("r", ("A", "B", "A"), (1.0, 1.0)),), frozenset({"A"}))
    net2 = pickle.loads(pickle.dumps(net))
    assert dict(net2.stops) == dict(net.stops) and net2.candidate_nodes == net.candidate_nodes
