"""Scenario topologies, static shortest-hop routing and flow selection."""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field

from .core import NodeId

TX_RANGE_M = 750.0
REGION_SIDE_M = 200.0


class Unreachable(ValueError):
    pass


class GenerationFailed(RuntimeError):
    pass


@dataclass
class Topology:
    positions: list[tuple[float, float]]
    tx_range_m: float = TX_RANGE_M
    regions: dict[str, list[NodeId]] = field(default_factory=dict)
    region_pairs: list[tuple[str, str]] = field(default_factory=list)
    adjacency: list[list[NodeId]] = field(init=False)

    def __post_init__(self):
        self.adjacency = unit_disk_adjacency(self.positions, self.tx_range_m)

    def __len__(self) -> int:
        return len(self.positions)

    def distance(self, a: NodeId, b: NodeId) -> float:
        (xa, ya), (xb, yb) = self.positions[a], self.positions[b]
        return math.hypot(xa - xb, ya - yb)

    def region_of(self, node: NodeId) -> str | None:
        for name, members in self.regions.items():
            if node in members:
                return name
        return None

    def is_connected(self) -> bool:
        if not self.positions:
            return True
        return len(bfs_distances(self.adjacency, 0)) == len(self.positions)


@dataclass(frozen=True)
class TrafficSpec:
    mode: str = "saturated"  # saturated | offered_load
    offered_rate_bits_per_s: float = 0.0
    flow_rule: str = "region_pair"  # region_pair | k_hop
    k: int = 2
    realtime_fraction: float = 1.0

    def __post_init__(self):
        if self.mode not in ("saturated", "offered_load"):
            raise ValueError(f"unknown traffic mode {self.mode!r}")
        if self.flow_rule not in ("region_pair", "k_hop"):
            raise ValueError(f"unknown flow rule {self.flow_rule!r}")
        if not 0.0 <= self.realtime_fraction <= 1.0:
            raise ValueError("realtime_fraction must lie in [0, 1]")
        if self.mode == "offered_load" and self.offered_rate_bits_per_s <= 0:
            raise ValueError("offered_load needs a positive offered_rate_bits_per_s")
        if self.k < 1:
            raise ValueError("k must be at least 1")


def unit_disk_adjacency(positions, tx_range_m: float) -> list[list[NodeId]]:
    n = len(positions)
    adj: list[list[NodeId]] = [[] for _ in range(n)]
    for i in range(n):
        xi, yi = positions[i]
        for j in range(i + 1, n):
            xj, yj = positions[j]
            if math.hypot(xi - xj, yi - yj) <= tx_range_m:
                adj[i].append(j)
                adj[j].append(i)
    return adj


def bfs_distances(adjacency, root: NodeId) -> dict[NodeId, int]:
    dist = {root: 0}
    todo = deque([root])
    while todo:
        u = todo.popleft()
        for v in adjacency[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                todo.append(v)
    return dist


@dataclass
class Routes:
    next_hop: list[dict[NodeId, NodeId]]
    hops: list[list[int]]

    def path(self, src: NodeId, dst: NodeId) -> list[NodeId]:
        out = [src]
        while out[-1] != dst:
            out.append(self.next_hop[out[-1]][dst])
        return out


def static_routes(topology: Topology) -> Routes:
    """Shortest-hop next hops; among equal candidates the lowest id wins."""
    adj = topology.adjacency
    n = len(adj)
    hops = [[0] * n for _ in range(n)]
    next_hop: list[dict[NodeId, NodeId]] = [{} for _ in range(n)]
    for d in range(n):
        dist = bfs_distances(adj, d)
        if len(dist) != n:
            missing = min(set(range(n)) - set(dist))
            raise Unreachable(f"node {missing} cannot reach node {d}")
        for s in range(n):
            hops[s][d] = dist[s]
            if s != d:
                next_hop[s][d] = min(v for v in adj[s] if dist[v] == dist[s] - 1)
    return Routes(next_hop, hops)


def _square(rng: random.Random, cx: float, cy: float, side: float) -> tuple[float, float]:
    h = side / 2
    return (cx + rng.uniform(-h, h), cy + rng.uniform(-h, h))


def _regions(rng, centers: list[tuple[str, float, float]], n_per_region: int, side: float,
             tx_range_m: float) -> Topology:
    positions = []
    regions: dict[str, list[NodeId]] = {}
    for name, cx, cy in centers:
        ids = []
        for _ in range(n_per_region):
            ids.append(len(positions))
            positions.append(_square(rng, cx, cy, side))
        regions[name] = ids
    return Topology(positions, tx_range_m, regions)


def make_short_hop(n_per_region: int, seed: int, spacing_m: float = 500.0,
                   region_side_m: float = REGION_SIDE_M, tx_range_m: float = TX_RANGE_M):
    """Three side-by-side regions; the outer two exchange traffic via the middle."""
    if n_per_region < 1:
        raise ValueError("n_per_region must be at least 1")
    rng = random.Random(f"short_hop:{seed}")
    centers = [("r1", 0.0, 0.0), ("r2", spacing_m, 0.0), ("r3", 2 * spacing_m, 0.0)]
    topo = _regions(rng, centers, n_per_region, region_side_m, tx_range_m)
    topo.region_pairs = [("r1", "r3")]
    return topo, TrafficSpec(mode="saturated", flow_rule="region_pair")


def make_chain(regions: int = 5, n_per_region: int = 3, spacing_m: float = 500.0, seed: int = 0,
               region_side_m: float = REGION_SIDE_M, tx_range_m: float = TX_RANGE_M):
    """Regions on a line; the two end regions exchange traffic end to end."""
    if regions < 2 or n_per_region < 1:
        raise ValueError("need at least two regions and one node per region")
    rng = random.Random(f"chain:{seed}")
    centers = [(f"r{i + 1}", i * spacing_m, 0.0) for i in range(regions)]
    topo = _regions(rng, centers, n_per_region, region_side_m, tx_range_m)
    topo.region_pairs = [("r1", f"r{regions}")]
    return topo, TrafficSpec(mode="offered_load", offered_rate_bits_per_s=1e6, flow_rule="region_pair")


def make_cross(arm_regions: int = 2, n_per_region: int = 3, spacing_m: float = 500.0, seed: int = 0,
               region_side_m: float = REGION_SIDE_M, tx_range_m: float = TX_RANGE_M):
    """Two perpendicular chains sharing the center region.

    Center nodes take the lowest ids so that shortest-hop ties resolve
    through the center. Arm regions are named by direction and distance
    from the center, e.g. ``w2`` is the western end.
    """
    if arm_regions < 1 or n_per_region < 1:
        raise ValueError("need at least one arm region and one node per region")
    rng = random.Random(f"cross:{seed}")
    centers = [("c", 0.0, 0.0)]
    for name, dx, dy in (("w", -1, 0), ("e", 1, 0), ("n", 0, 1), ("s", 0, -1)):
        for i in range(1, arm_regions + 1):
            centers.append((f"{name}{i}", dx * i * spacing_m, dy * i * spacing_m))
    topo = _regions(rng, centers, n_per_region, region_side_m, tx_range_m)
    a = arm_regions
    topo.region_pairs = [(f"w{a}", f"e{a}"), (f"n{a}", f"s{a}")]
    return topo, TrafficSpec(mode="saturated", flow_rule="region_pair")


def make_random(n_nodes: int, seed: int, area_m: float = 2000.0, max_link_m: float = 500.0,
                tx_range_m: float = TX_RANGE_M, max_rounds: int = 10_000) -> Topology:
    """Uniform placement, resampled until connected with short nearest-neighbor links."""
    if n_nodes < 2:
        raise ValueError("n_nodes must be at least 2")
    rng = random.Random(f"random:{seed}")
    for _ in range(max_rounds):
        positions = [(rng.uniform(0, area_m), rng.uniform(0, area_m)) for _ in range(n_nodes)]
        if not _nearest_within(positions, max_link_m):
            continue
        topo = Topology(positions, tx_range_m, {"all": list(range(n_nodes))})
        if topo.is_connected():
            return topo
    raise GenerationFailed(f"no connected placement of {n_nodes} nodes after {max_rounds} rounds")


def _nearest_within(positions, limit: float) -> bool:
    for i, (xi, yi) in enumerate(positions):
        best = min(math.hypot(xi - xj, yi - yj) for j, (xj, yj) in enumerate(positions) if j != i)
        if best > limit:
            return False
    return True


def build_flows(topology: Topology, traffic: TrafficSpec, routes: Routes,
                rng: random.Random) -> list[tuple[NodeId, NodeId]]:
    """(source, destination) pairs for the traffic rule."""
    flows: list[tuple[NodeId, NodeId]] = []
    if traffic.flow_rule == "region_pair":
        for a, b in topology.region_pairs:
            for s, d in zip(topology.regions[a], topology.regions[b]):
                flows.append((s, d))
                flows.append((d, s))
        return flows
    for s in range(len(topology)):
        candidates = [d for d in range(len(topology)) if routes.hops[s][d] == traffic.k]
        if candidates:
            flows.append((s, rng.choice(candidates)))
    return flows
