"""One deterministic simulation run: wiring, traffic sources and bookkeeping."""

from __future__ import annotations

import itertools
import random
from collections import Counter
from dataclasses import dataclass, field

from .core import PACKET_BYTES, FrameTiming, NodeId, ProtocolParams, QueuedPacket, SimTime
from .engine import Channel, EventQueue
from .mac import FTKN, VARIANTS, Node
from .metrics import FlowCounts, MetricsReport, Trace, check_conservation, collect
from .topology import Topology, TrafficSpec, build_flows, static_routes
from .wra import congestion_wra_threshold


@dataclass
class RunSpec:
    """Everything one run needs, with the topology already generated."""

    topology: Topology
    traffic: TrafficSpec
    variant: str
    params: ProtocolParams = field(default_factory=ProtocolParams)
    timing: FrameTiming = field(default_factory=FrameTiming)
    duration_us: SimTime = 5_000_000
    rts_cts: bool = True
    flows: list[tuple[NodeId, NodeId]] | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.duration_us <= 0:
            raise ValueError("duration_us must be positive")


class Simulator:
    def __init__(self, spec: RunSpec, seed: int, trace: bool = False):
        self.spec = spec
        self.seed = seed
        self.params = spec.params
        self.timing = spec.timing
        self.variant = spec.variant
        self.rts_cts = spec.rts_cts
        self.duration_us = spec.duration_us
        self.packet_bytes = PACKET_BYTES
        self.topology = spec.topology
        self.queue = EventQueue()
        self.channel = Channel(self.topology.adjacency, self.queue)
        self.routes = static_routes(self.topology)
        self.t_access_us = self.params.access_time(self.timing)
        self.congestion_threshold = congestion_wra_threshold(self.params)
        self.trace = Trace(trace)
        self.nodes = [Node(self, i) for i in range(len(self.topology))]
        self.channel.attach(self.nodes)

        flows = spec.flows
        if flows is None:
            flows = build_flows(self.topology, spec.traffic, self.routes, random.Random(f"{seed}:flows"))
        self.flows = list(flows)
        self.flow_counts = [FlowCounts(s, d) for s, d in self.flows]
        self._rt_rng = random.Random(f"{seed}:realtime")
        self._pids = itertools.count()
        self.owner: dict[int, NodeId] = {}
        self.delay_sum_us = 0
        self.diag: Counter[str] = Counter()

    # packet bookkeeping -------------------------------------------------------

    def new_packet(self, src: NodeId, dst: NodeId, flow: int, now: SimTime) -> QueuedPacket:
        frac = self.spec.traffic.realtime_fraction
        realtime = frac >= 1.0 or self._rt_rng.random() < frac
        pk = QueuedPacket(next(self._pids), src, dst, self.packet_bytes, 0, now, realtime, flow)
        self.owner[pk.id] = src
        self.flow_counts[flow].generated += 1
        self.trace.emit("gen", now, pk.id, src, dst)
        return pk

    def accept(self, pk: QueuedPacket, sender: NodeId, node: Node, now: SimTime) -> None:
        """Hand-over of a received packet; duplicates of an already handed-over packet are ignored."""
        if self.owner.get(pk.id) != sender:
            return
        if pk.final_destination == node.id:
            del self.owner[pk.id]
            self.flow_counts[pk.flow].delivered += 1
            self.delay_sum_us += now - pk.created_at
            self.trace.emit("deliver", now, pk.id, node.id)
        elif not node.has_room():
            self.drop(pk, "buffer", sender, now)
        else:
            self.owner[pk.id] = node.id
            node.enqueue(pk.forwarded(), now)

    def drop(self, pk: QueuedPacket, cause: str, holder: NodeId, now: SimTime) -> None:
        if self.owner.get(pk.id) != holder:
            return
        del self.owner[pk.id]
        fc = self.flow_counts[pk.flow]
        if cause == "buffer":
            fc.dropped_buffer += 1
        else:
            fc.dropped_retry += 1
        self.trace.emit("drop", now, pk.id, holder, cause)

    # traffic -----------------------------------------------------------------

    def _arrival(self, flow: int, rng: random.Random, mean_gap_us: float) -> None:
        now = self.queue.now
        src, dst = self.flows[flow]
        node = self.nodes[src]
        pk = self.new_packet(src, dst, flow, now)
        if node.has_room():
            node.enqueue(pk, now)
        else:
            self.drop(pk, "buffer", src, now)
        self._schedule_arrival(flow, rng, mean_gap_us)

    def _schedule_arrival(self, flow: int, rng: random.Random, mean_gap_us: float) -> None:
        t = self.queue.now + max(1, int(rng.expovariate(1.0 / mean_gap_us)))
        if t < self.duration_us:
            self.queue.schedule(t, self._arrival, flow, rng, mean_gap_us)

    def _start_traffic(self) -> None:
        traffic = self.spec.traffic
        if traffic.mode == "saturated":
            for i, (s, d) in enumerate(self.flows):
                self.nodes[s].saturated_flows.append((i, d))
            for node in self.nodes:
                node.refill(0)
                node.reevaluate(0)
            return
        mean_gap_us = self.packet_bytes * 8 / traffic.offered_rate_bits_per_s * 1e6
        for i in range(len(self.flows)):
            self._schedule_arrival(i, random.Random(f"{self.seed}:arrivals:{i}"), mean_gap_us)

    # run ------------------------------------------------------------------------

    def run(self) -> MetricsReport:
        self._start_traffic()
        if self.variant == FTKN:
            for node in self.nodes:
                self.queue.schedule(0, node.wra_tick)
        self.queue.run(self.duration_us)
        for node in self.nodes:
            node.energy.advance(self.duration_us)
        live = self._live_per_flow()
        for i, fc in enumerate(self.flow_counts):
            fc.live = live.get(i, 0)
        report = collect(self)
        check_conservation(report)
        return report

    def _live_per_flow(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        seen: set[int] = set()
        for node in self.nodes:
            for pk in node.queue + node.inflight:
                if pk.id in seen or self.owner.get(pk.id) != node.id:
                    continue
                seen.add(pk.id)
                counts[pk.flow] = counts.get(pk.flow, 0) + 1
        if len(seen) != len(self.owner):
            missing = set(self.owner) - seen
            raise AssertionError(f"owned packets missing from every buffer: {sorted(missing)[:5]}")
        return counts


def run(scenario, seed: int, trace: bool = False) -> tuple[MetricsReport, Trace]:
    """Run one (scenario, seed) pair.

    ``scenario`` is a RunSpec or anything with ``build(seed) -> RunSpec``
    such as a ScenarioConfig.
    """
    spec = scenario if isinstance(scenario, RunSpec) else scenario.build(seed)
    sim = Simulator(spec, seed, trace)
    report = sim.run()
    return report, sim.trace
