import heapq
import itertools
import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from busgrid.core import KM_PER_MILE, BusStop, EconomicParams, PowerNode, ValidationError, geodesic_miles
from busgrid.gridsynth import (
    Anchor,
    GridSynthConfig,
    assign_electrics,
    build_mst_topology,
    coupling_candidates,
    load_grid_override,
    orient_from,
    select_power_nodes,
    synthesize_grid,
    write_grid_tables,
)
from busgrid.synthetic import CENTER, _offset


def _east(km, name):
    lat, lon = _offset(CENTER, 0.0, km / KM_PER_MILE)
    return Anchor(name, lat, lon)


def _prufer_trees(n):
    """Every labelled spanning tree on ``n`` nodes, decoded from its Pruefer sequence."""
    if n == 1:
        yield []
        return
    if n == 2:
        yield [(0, 1)]
        return
    for seq in itertools.product(range(n), repeat=n - 2):
        degree = [1] * n
        for s in seq:
            degree[s] += 1
        leaves = [i for i in range(n) if degree[i] == 1]
        heapq.heapify(leaves)
        edges = []
        for s in seq:
            leaf = heapq.heappop(leaves)
            edges.append((leaf, s))
            degree[s] -= 1
            if degree[s] == 1:
                heapq.heappush(leaves, s)
        edges.append((heapq.heappop(leaves), heapq.heappop(leaves)))
        yield edges


def _brute_force_mst(anchors):
    n = len(anchors)
    d = [[geodesic_miles(a.coords, b.coords) for b in anchors] for a in anchors]
    return min(sum(d[u][v] for u, v in t) for t in _prufer_trees(n))


def test_pruefer_counts():
    assert sum(1 for _ in _prufer_trees(6)) == 6 ** 4


def test_clustered_scenario():
    # a, b, c pairwise within the threshold; d far away
    nodes = [_east(0.0, "a"), _east(0.5, "b"), _east(1.0, "c"), _east(10.0, "d")]
    assert select_power_nodes(nodes, 2.0) == ["a", "d"]


def test_single_candidate():
    assert select_power_nodes([_east(0.0, "p")], 2.0) == ["p"]


def test_collinear_trace():
    nodes = [_east(0.0, "p"), _east(1.5, "q"), _east(3.0, "r")]
    assert select_power_nodes(nodes, 2.0) == ["p", "r"]


def test_anchors_are_not_a_packing():
    # greedy suppression only looks at earlier anchors: q suppresses nothing once p marked it
    nodes = [_east(0.0, "p"), _east(1.9, "q"), _east(2.1, "r"), _east(3.9, "s")]
    kept = select_power_nodes(nodes, 2.0)
    assert kept == ["p", "r"]


@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=10), st.floats(0.5, 4.0))
def test_appending_covered_nodes(points, threshold):
    nodes = [Anchor(f"n{k}", *_offset(CENTER, a, b)) for k, (a, b) in enumerate(points)]
    kept = select_power_nodes(nodes, threshold)
    first = next(a for a in nodes if a.id == kept[0])
    extra = Anchor("extra", first.lat + 1e-5, first.lon)
    assert select_power_nodes(nodes + [extra], threshold) == kept


def test_triangle_mst():
    a, b, c = _east(0.0, "a"), _east(1.0, "b"), _east(3.0, "c")
    edges = build_mst_topology([a, b, c])
    assert sorted(frozenset((u, v)) for u, v, _ in edges) == sorted([frozenset("ab"), frozenset("bc")])
    lengths = sorted(w for _, _, w in edges)
    assert lengths == pytest.approx(sorted([geodesic_miles(a.coords, b.coords), geodesic_miles(b.coords, c.coords)]))


def test_single_node_mst():
    assert build_mst_topology([_east(0, "x")]) == []


def test_six_random_nodes_match_enumeration():
    rng = random.Random(6)
    anchors = [Anchor(str(k), *_offset(CENTER, rng.uniform(-5, 5), rng.uniform(-5, 5))) for k in range(6)]
    total = sum(w for _, _, w in build_mst_topology(anchors))
    assert total == pytest.approx(_brute_force_mst(anchors), rel=1e-12)


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=1, max_size=7, unique=True))
def test_mst_matches_enumeration(points):
    anchors = [Anchor(str(k), *_offset(CENTER, a, b)) for k, (a, b) in enumerate(points)]
    edges = build_mst_topology(anchors)
    assert len(edges) == len(anchors) - 1
    assert sum(w for _, _, w in edges) == pytest.approx(_brute_force_mst(anchors), rel=1e-9, abs=1e-12)


def test_mst_beats_random_trees():
    rng = random.Random(11)
    anchors = [Anchor(str(k), *_offset(CENTER, rng.uniform(-8, 8), rng.uniform(-8, 8))) for k in range(12)]
    best = sum(w for _, _, w in build_mst_topology(anchors))
    for _ in range(100):
        order = list(range(12))
        rng.shuffle(order)
        # random tree: attach each node to a random earlier one
        total = sum(geodesic_miles(anchors[order[k]].coords, anchors[order[rng.randrange(k)]].coords)
                    for k in range(1, 12))
        assert best <= total + 1e-12


def test_orientation_is_a_tree_from_slack():
    rng = random.Random(3)
    anchors = [Anchor(str(k), *_offset(CENTER, rng.uniform(-5, 5), rng.uniform(-5, 5))) for k in range(8)]
    grid = assign_electrics(anchors, build_mst_topology(anchors), GridSynthConfig())
    assert len(grid.bfs_order()) == 8
    for n in grid.nodes:
        path, cur = [], n.id
        while cur != grid.slack_id:
            cur = grid.parent_branch(cur).from_id
            path.append(cur)
        assert len(path) == len(set(path))


def test_impedance_scaling():
    a, b = Anchor("1", *CENTER), Anchor("2", *_offset(CENTER, 2.0, 0.0))
    edges = [("1", "2", 2.0)]
    grid = assign_electrics([a, b], edges, GridSynthConfig(r_per_mile_pu=0.002, x_per_mile_pu=0.003))
    (br,) = grid.branches
    assert br.r_pu == pytest.approx(0.004) and br.x_pu == pytest.approx(0.006)
    assert grid.v_slack_sq_pu == 1.0


def test_star_slack_at_hub():
    hub = Anchor("9", *CENTER)
    legs = [Anchor(str(k), *_offset(CENTER, math.cos(k * 2.1), math.sin(k * 2.1))) for k in range(3)]
    edges = [(leg.id, "9", 1.0) for leg in legs]
    grid = assign_electrics([hub] + legs, edges, GridSynthConfig())
    assert grid.slack_id == "9"


def test_slack_tie_lowest_id():
    nodes = [Anchor("2", *CENTER), Anchor("1", *_offset(CENTER, 1, 0))]
    grid = assign_electrics(nodes, [("2", "1", 1.0)], GridSynthConfig())
    assert grid.slack_id == "1"


def test_non_tree_rejected():
    nodes = [Anchor(str(k), *_offset(CENTER, k, 0)) for k in range(3)]
    cyc = [("0", "1", 1.0), ("1", "2", 1.0), ("2", "0", 2.0)]
    with pytest.raises(ValidationError, match="topology not radial"):
        assign_electrics(nodes, cyc, GridSynthConfig())
    with pytest.raises(ValidationError, match="topology not radial"):
        orient_from("0", ["0", "1", "2"], [("0", "1", 1.0)])


def test_duplicate_coordinates_warn(caplog):
    nodes = [Anchor("a", *CENTER), Anchor("b", *CENTER)]
    with caplog.at_level("WARNING"):
        edges = build_mst_topology(nodes)
    assert edges[0][2] == 0.0 and "zero-length" in caplog.text
    grid = assign_electrics(nodes, edges, GridSynthConfig())
    assert grid.branches[0].r_pu > 0


def _grid(n=3):
    anchors = [Anchor(f"g{k}", *_offset(CENTER, 0.0, 2.0 * k)) for k in range(n)]
    return assign_electrics(anchors, build_mst_topology(anchors), GridSynthConfig())


def test_coincident_stop_costs_nothing():
    grid = _grid()
    node = grid.nodes[1]
    (c,) = coupling_candidates([BusStop("m", "", node.lat, node.lon)], grid, EconomicParams(), k=1)
    assert c.power_node_id == node.id and c.line_cost_usd == 0.0


def test_one_mile_line_cost():
    grid = _grid()
    lat, lon = _offset(grid.nodes[0].coords, 1.0, 0.0)
    stop = BusStop("m", "", lat, lon)
    (c,) = coupling_candidates([stop], grid, EconomicParams(), k=1)
    assert c.line_miles == pytest.approx(1.0, rel=2e-3)
    assert c.line_cost_usd == pytest.approx(c.line_miles * 390_000, rel=1e-12)


def test_k_clamped_to_grid_size():
    grid = _grid(3)
    cc = coupling_candidates([BusStop("m", "", *CENTER)], grid, EconomicParams(), k=10)
    assert sorted(c.power_node_id for c in cc) == ["g0", "g1", "g2"]
    with pytest.raises(ValidationError):
        coupling_candidates([], grid, EconomicParams(), k=0)


def test_synthesize_with_explicit_anchors():
    stops = [BusStop(str(k), "", *_offset(CENTER, 0.0, 0.5 * k)) for k in range(6)]
    grid = synthesize_grid(stops, GridSynthConfig(), ["0", "5"])
    assert sorted(n.id for n in grid.nodes) == ["0", "5"]
    auto = synthesize_grid(stops, GridSynthConfig())
    assert [n.id for n in auto.nodes] == select_power_nodes(stops, 2.0)


def test_override_tables_pass_through(tmp_path):
    grid = _grid(4)
    nodes_csv, branches_csv = write_grid_tables(grid, tmp_path)
    back = load_grid_override(nodes_csv, branches_csv, grid.base_mva, grid.base_kv)
    assert back.slack_id == grid.slack_id
    for a, b in zip(grid.nodes, back.nodes):
        assert (a.id, a.lat, a.lon) == (b.id, b.lat, b.lon)
        assert b.load_p_pu == pytest.approx(a.load_p_pu, rel=1e-12)
        assert b.load_q_pu == pytest.approx(a.load_q_pu, rel=1e-12)
        assert b.vmin_sq_pu == pytest.approx(a.vmin_sq_pu, rel=1e-12)
    for a, b in zip(grid.branches, back.branches):
        assert a.key == b.key
        assert (b.r_pu, b.x_pu) == pytest.approx((a.r_pu, a.x_pu), rel=1e-12)
        assert b.current_sq_limit_pu == pytest.approx(a.current_sq_limit_pu, rel=1e-12)


def test_override_without_reactive_load(tmp_path):
    (tmp_path / "n.csv").write_text("id,lat,lon,load_kw,vmin_pu,vmax_pu\n1,47.3,-122.2,0,0.95,1.05\n"
                                    "2,47.31,-122.2,95,0.95,1.05\n")
    (tmp_path / "b.csv").write_text("from,to,r_pu,x_pu,limit_pu\n2,1,0.01,0.02,2\n")
    g = load_grid_override(tmp_path / "n.csv", tmp_path / "b.csv")
    assert g.branches[0].key == ("1", "2") or g.branches[0].key == ("2", "1")
    n2 = g.node("2")
    assert n2.load_p_pu == pytest.approx(0.0095)
    assert n2.load_q_pu == pytest.approx(0.0095 * math.tan(math.acos(0.95)))
    assert g.branches[0].current_sq_limit_pu == pytest.approx(4.0)
    assert isinstance(n2, PowerNode)
