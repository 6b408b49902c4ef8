"""Weight of Reservation Ability and the per-node load comparison built on it.

A node's WRA weights the bytes it buffers by how often each packet has
already been forwarded, so relays score above sources holding the same
backlog. Neighbors' WRA values are learned from overheard reservation
instructions and kept as NeighborRecord entries.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, replace

from .core import NodeId, ProtocolParams, QueuedPacket, SimTime


class EmptyContentionSet(ValueError):
    """No neighbor in the contention set; the node is uncontended."""


class ZeroNeighborLoad(ValueError):
    """Every neighbor advertises zero load, so the mean is zero."""


@dataclass(frozen=True)
class NeighborRecord:
    node: NodeId
    wra: float
    last_heard: SimTime
    hop_distance: int = 1

    def __post_init__(self):
        if self.hop_distance not in (1, 2):
            raise ValueError("hop_distance must be 1 or 2")
        if self.wra < 0:
            raise ValueError("wra must be non-negative")

    def is_live(self, now: SimTime, staleness_us: SimTime) -> bool:
        return now - self.last_heard <= staleness_us


def compute_wra(queue: Iterable[QueuedPacket], params: ProtocolParams) -> float:
    local = 0
    relay = 0
    for pkt in queue:
        if pkt.hop_count == 0:
            local += pkt.length_bytes
        else:
            relay += pkt.length_bytes
    return params.weight_local * local + params.weight_relay * relay


def _wra_values(neighbors) -> list[float]:
    return [n.wra if isinstance(n, NeighborRecord) else float(n) for n in neighbors]


def compute_lambda(own_wra: float, neighbors: Iterable[NeighborRecord | float]) -> float:
    """Ratio of this node's WRA to the mean WRA of its contention set."""
    values = _wra_values(neighbors)
    if not values:
        raise EmptyContentionSet("no neighbors in the contention set")
    mean = sum(values) / len(values)
    if mean == 0:
        raise ZeroNeighborLoad("mean neighbor WRA is zero")
    return own_wra / mean


def congestion_wra_threshold(params: ProtocolParams) -> float:
    """WRA of a node whose buffer sits exactly at the congestion threshold.

    The average buffer length is taken as capacity in packets times the
    mean packet size, so the threshold is in weighted bytes like the WRA.
    """
    buffer_bytes = params.buffer_capacity_packets * params.mean_packet_bytes
    return params.mean_weight * params.th_buffer * buffer_bytes


def is_any_neighbor_congested(neighbors: Iterable[NeighborRecord | float], threshold: float) -> bool:
    values = _wra_values(neighbors)
    if not values:
        return False
    return max(values) >= threshold


def live_neighbors(records: Mapping[NodeId, NeighborRecord], now: SimTime,
                   params: ProtocolParams) -> list[NeighborRecord]:
    horizon = params.staleness_us
    return [r for r in records.values() if r.is_live(now, horizon)]


@dataclass(frozen=True)
class WraState:
    """Last computed WRA and correction factor of one node."""

    own_wra: float = 0.0
    lam: float | None = None
    last_update: SimTime | None = None


def refresh_wra_state(state: WraState, queue: Iterable[QueuedPacket],
                      neighbors: Iterable[NeighborRecord], now: SimTime,
                      params: ProtocolParams, transmit_opportunity: bool = False) -> WraState:
    """WRA updating phase.

    Recomputes own WRA and the correction factor when the node holds a
    transmission opportunity or the update period has elapsed; otherwise
    returns ``state`` untouched. A node with no heard neighbors keeps
    ``lam=None``; silent neighbors give ``lam=inf`` unless own WRA is 0.
    """
    due = state.last_update is None or now - state.last_update >= params.wra_update_period_us
    if not (transmit_opportunity or due):
        return state
    own = compute_wra(queue, params)
    try:
        lam = compute_lambda(own, neighbors)
    except EmptyContentionSet:
        lam = None
    except ZeroNeighborLoad:
        lam = 0.0 if own == 0 else float("inf")
    return replace(state, own_wra=own, lam=lam, last_update=now)
