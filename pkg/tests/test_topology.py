import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crmsim.topology import (
    GenerationFailed,
    Topology,
    TrafficSpec,
    Unreachable,
    build_flows,
    make_chain,
    make_cross,
    make_random,
    make_short_hop,
    static_routes,
)


def hop_oracle(positions, tx_range, src):
    """Bellman-Ford style relaxation over the distance matrix, independent of the BFS."""
    n = len(positions)
    inf = float("inf")
    dist = [inf] * n
    dist[src] = 0
    for _ in range(n):
        for a in range(n):
            for b in range(n):
                xa, ya = positions[a]
                xb, yb = positions[b]
                if a != b and ((xa - xb) ** 2 + (ya - yb) ** 2) ** 0.5 <= tx_range:
                    dist[b] = min(dist[b], dist[a] + 1)
    return dist


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_route_lengths_match_oracle(seed):
    topo = make_random(12, seed)
    routes = static_routes(topo)
    for s in range(len(topo)):
        want = hop_oracle(topo.positions, topo.tx_range_m, s)
        for d in range(len(topo)):
            assert routes.hops[s][d] == want[d]
            path = routes.path(s, d)
            assert len(path) - 1 == want[d]
            for a, b in zip(path, path[1:]):
                assert topo.distance(a, b) <= topo.tx_range_m


def test_lowest_id_tie_break():
    # a diamond: 0 reaches 3 through either 1 or 2
    topo = Topology([(0, 0), (500, 300), (500, -300), (1000, 0)], tx_range_m=700)
    assert static_routes(topo).path(0, 3) == [0, 1, 3]
    assert static_routes(topo).path(3, 0) == [3, 1, 0]


def test_unreachable():
    with pytest.raises(Unreachable):
        static_routes(Topology([(0, 0), (5000, 0)]))


@pytest.mark.parametrize("seed", range(5))
def test_chain_end_regions_are_four_hops_apart(seed):
    topo, traffic = make_chain(seed=seed)
    routes = static_routes(topo)
    flows = build_flows(topo, traffic, routes, random.Random(0))
    assert len(flows) == 6
    assert all(routes.hops[s][d] == 4 for s, d in flows)


@pytest.mark.parametrize("seed", range(5))
def test_short_hop_flows_cross_the_middle_region(seed):
    topo, traffic = make_short_hop(4, seed)
    routes = static_routes(topo)
    flows = build_flows(topo, traffic, routes, random.Random(0))
    assert len(flows) == 8
    middle = set(topo.regions["r2"])
    for s, d in flows:
        path = routes.path(s, d)
        assert len(path) == 3 and path[1] in middle


def test_cross_routes_pass_through_center():
    topo, traffic = make_cross(seed=3)
    routes = static_routes(topo)
    center = set(topo.regions["c"])
    flows = build_flows(topo, traffic, routes, random.Random(0))
    assert len(flows) == 12
    for s, d in flows:
        assert center & set(routes.path(s, d))


@pytest.mark.parametrize("seed", range(5))
def test_random_is_connected_and_deterministic(seed):
    a = make_random(20, seed)
    b = make_random(20, seed)
    assert a.positions == b.positions
    assert a.is_connected()
    for i, p in enumerate(a.positions):
        assert min(a.distance(i, j) for j in range(len(a)) if j != i) <= 500


def test_random_generation_can_fail():
    with pytest.raises(GenerationFailed):
        make_random(3, 0, area_m=100_000, max_link_m=1.0, max_rounds=5)


def test_k_hop_flows():
    topo = make_random(20, 1)
    routes = static_routes(topo)
    flows = build_flows(topo, TrafficSpec("offered_load", 1e5, "k_hop", k=2), routes, random.Random(4))
    assert flows
    assert len({s for s, _ in flows}) == len(flows)
    assert all(routes.hops[s][d] == 2 for s, d in flows)
    again = build_flows(topo, TrafficSpec("offered_load", 1e5, "k_hop", k=2), routes, random.Random(4))
    assert flows == again


def test_traffic_validation():
    with pytest.raises(ValueError):
        TrafficSpec(mode="burst")
    with pytest.raises(ValueError):
        TrafficSpec(mode="offered_load")
    with pytest.raises(ValueError):
        TrafficSpec(realtime_fraction=1.5)
