"""Run metrics, the event trace and the packet conservation check."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .core import SimTime


class Trace:
    """Newline-delimited event records, hashed as they are emitted.

    The hash is always maintained so every run reports one; the records
    themselves are kept only when ``keep`` is set.
    """

    def __init__(self, keep: bool = False):
        self.keep = keep
        self.records: list[tuple] = []
        self._hash = hashlib.sha256()

    def emit(self, *record) -> None:
        self._hash.update(repr(record).encode())
        if self.keep:
            self.records.append(record)

    def hexdigest(self) -> str:
        return self._hash.hexdigest()

    def lines(self):
        for rec in self.records:
            yield json.dumps(list(rec))


class ConservationError(AssertionError):
    pass


@dataclass
class FlowCounts:
    source: int
    destination: int
    generated: int = 0
    delivered: int = 0
    dropped_buffer: int = 0
    dropped_retry: int = 0
    live: int = 0

    def balanced(self) -> bool:
        return self.generated == self.delivered + self.dropped_buffer + self.dropped_retry + self.live


@dataclass
class MetricsReport:
    end_to_end_throughput_bits_per_s: float
    mean_end_to_end_delay_us: float | None
    per_node_energy_mJ: list[float]
    drops: dict[str, int]
    collisions: int
    reservation_utilization: float | None
    duration_us: SimTime = 0
    delivered: int = 0
    generated: int = 0
    flows: list[FlowCounts] = field(default_factory=list)
    reserved_collisions: int = 0
    silencing_violations: int = 0
    cw_rule_violations: int = 0
    reservations_per_node: list[int] = field(default_factory=list)
    mean_lambda_per_node: list[float | None] = field(default_factory=list)
    tx_time_us: list[SimTime] = field(default_factory=list)
    rx_listen_time_us: list[SimTime] = field(default_factory=list)
    sleep_time_us: list[SimTime] = field(default_factory=list)
    trace_hash: str = ""

    @property
    def mean_energy_mJ(self) -> float:
        e = self.per_node_energy_mJ
        return sum(e) / len(e) if e else 0.0

    @property
    def total_drops(self) -> int:
        return sum(self.drops.values())

    def conserved(self) -> bool:
        return all(f.balanced() for f in self.flows)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["mean_energy_mJ"] = self.mean_energy_mJ
        return out


def check_conservation(report: MetricsReport) -> None:
    for f in report.flows:
        if not f.balanced():
            raise ConservationError(f"flow {f.source}->{f.destination} does not balance: {f}")


def collect(sim) -> MetricsReport:
    """Summarize a finished Simulator."""
    duration = sim.duration_us
    delivered = sum(f.delivered for f in sim.flow_counts)
    bits = delivered * sim.packet_bytes * 8
    throughput = bits / (duration / 1e6) if duration > 0 else 0.0
    delay = sim.delay_sum_us / delivered if delivered else None
    reserved = 0
    used = 0
    for node in sim.nodes:
        used += node.stats["reserved_used_us"]
        for start, end, _ in node.reservation_log:
            if start < duration:
                reserved += min(end, duration) - start
    lambdas = []
    for node in sim.nodes:
        n = node.stats["lambda_n"]
        lambdas.append(node.stats["lambda_sum"] / n if n else None)
    return MetricsReport(
        end_to_end_throughput_bits_per_s=throughput,
        mean_end_to_end_delay_us=delay,
        per_node_energy_mJ=[n.energy.energy_mj() for n in sim.nodes],
        drops={"buffer": sum(f.dropped_buffer for f in sim.flow_counts),
               "retry": sum(f.dropped_retry for f in sim.flow_counts)},
        collisions=sim.channel.collisions,
        reservation_utilization=(used / reserved) if reserved else None,
        duration_us=duration,
        delivered=delivered,
        generated=sum(f.generated for f in sim.flow_counts),
        flows=[FlowCounts(**asdict(f)) for f in sim.flow_counts],
        reserved_collisions=sim.channel.reserved_collisions,
        silencing_violations=sum(n.stats["silencing_violations"] for n in sim.nodes),
        cw_rule_violations=sum(n.stats["cw_rule_violations"] for n in sim.nodes),
        reservations_per_node=[n.stats["reservations"] for n in sim.nodes],
        mean_lambda_per_node=lambdas,
        tx_time_us=[n.energy.tx_time for n in sim.nodes],
        rx_listen_time_us=[n.energy.rx_listen_time for n in sim.nodes],
        sleep_time_us=[n.energy.sleep_time for n in sim.nodes],
        trace_hash=sim.trace.hexdigest(),
    )
