"""Reservation phase: offset computation and the per-node reservation table.

Offsets go through three stages: the fairness-driven basic offset over the
contention set, the correction by the node's relative load, and inertia
smoothing against recent offsets. The smoothed offset is then placed into
the reservation table, panned later as needed to avoid overlaps and short
unusable gaps between reservations.
"""

from __future__ import annotations

import bisect
import heapq
from collections import deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from .core import FrameTiming, NodeId, ProtocolParams, SimTime, round_half_up
from .wra import NeighborRecord

LEARNED_SELF = "self"
LEARNED_DIRECT = "direct"
LEARNED_ACK = "ack_forwarded"


class NonPositiveLambda(ValueError):
    """Correction factor <= 0 on the congested branch."""


@dataclass(frozen=True)
class ReservationEntry:
    owner_source: NodeId
    link_destination: NodeId
    start: SimTime
    end: SimTime
    learned_from: str = LEARNED_SELF

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"empty reservation [{self.start}, {self.end})")

    @property
    def duration(self) -> SimTime:
        return self.end - self.start

    def overlaps(self, start: SimTime, end: SimTime) -> bool:
        return self.start < end and start < self.end

    def covers(self, t: SimTime) -> bool:
        return self.start <= t < self.end

    def is_foreign_to(self, node: NodeId) -> bool:
        """True if ``node`` neither owns nor receives in this reservation."""
        return self.owner_source != node and self.link_destination != node


class ReservationTable:
    """Sorted, pairwise non-overlapping reservation intervals of one node."""

    def __init__(self, entries: Iterable[ReservationEntry] = ()):
        self._entries: list[ReservationEntry] = []
        self._starts: list[SimTime] = []
        for e in entries:
            self.add(e)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    @property
    def entries(self) -> tuple[ReservationEntry, ...]:
        return tuple(self._entries)

    def _conflicts(self, start: SimTime, end: SimTime) -> list[ReservationEntry]:
        # Entries are disjoint and sorted, so ends are sorted too.
        i = bisect.bisect_right(self._starts, start) - 1
        i = max(i, 0)
        out = []
        for e in self._entries[i:]:
            if e.start >= end:
                break
            if e.overlaps(start, end):
                out.append(e)
        return out

    def is_free(self, start: SimTime, end: SimTime) -> bool:
        return not self._conflicts(start, end)

    def add(self, entry: ReservationEntry) -> None:
        if self._conflicts(entry.start, entry.end):
            raise ValueError(f"reservation {entry} overlaps the table")
        i = bisect.bisect_left(self._starts, entry.start)
        self._starts.insert(i, entry.start)
        self._entries.insert(i, entry)

    def remove(self, entry: ReservationEntry) -> None:
        i = self._entries.index(entry)
        del self._entries[i]
        del self._starts[i]

    def purge(self, now: SimTime) -> int:
        """Drop entries that ended at or before ``now``; returns the count."""
        keep = [e for e in self._entries if e.end > now]
        dropped = len(self._entries) - len(keep)
        if dropped:
            self._entries = keep
            self._starts = [e.start for e in keep]
        return dropped

    def covering(self, t: SimTime) -> ReservationEntry | None:
        i = bisect.bisect_right(self._starts, t) - 1
        if i >= 0 and self._entries[i].covers(t):
            return self._entries[i]
        return None

    def next_start_after(self, t: SimTime) -> SimTime | None:
        """Earliest entry start strictly after ``t``."""
        i = bisect.bisect_right(self._starts, t)
        if i < len(self._starts):
            return self._starts[i]
        return None

    def last_end_at_or_before(self, t: SimTime) -> SimTime | None:
        i = bisect.bisect_right(self._starts, t) - 1
        while i >= 0:
            if self._entries[i].end <= t:
                return self._entries[i].end
            i -= 1
        return None

    def silence_end(self, t: SimTime, node: NodeId) -> SimTime | None:
        """End of the run of back-to-back foreign entries covering ``t``."""
        e = self.covering(t)
        if e is None or not e.is_foreign_to(node):
            return None
        end = e.end
        while True:
            nxt = self.covering(end)
            if nxt is None or not nxt.is_foreign_to(node):
                return end
            end = nxt.end

    def insert_heard(self, entry: ReservationEntry, me: NodeId) -> tuple[list[ReservationEntry], list[ReservationEntry]]:
        """Merge a reservation learned from another node.

        Entries already held for other nodes keep their interval; the new
        one only fills the time they leave uncovered, so coverage becomes
        the union. Own entries give way to the announcement. Returns the
        pieces added for ``entry`` and the surviving pieces of any own
        entry that was cut.
        """
        if entry.owner_source == me:
            return [], []
        s, e = entry.start, entry.end
        cut_own: list[ReservationEntry] = []
        blockers: list[ReservationEntry] = []
        for old in self._conflicts(s, e):
            if old.owner_source == me:
                self.remove(old)
                for a, b in ((old.start, s), (e, old.end)):
                    if a < b:
                        piece = ReservationEntry(old.owner_source, old.link_destination, a, b, old.learned_from)
                        self.add(piece)
                        cut_own.append(piece)
            else:
                blockers.append(old)
        added: list[ReservationEntry] = []
        cursor = s
        for b in sorted(blockers, key=lambda x: x.start):
            if b.start > cursor:
                added.append(ReservationEntry(entry.owner_source, entry.link_destination,
                                              cursor, b.start, entry.learned_from))
            cursor = max(cursor, b.end)
        if cursor < e:
            added.append(ReservationEntry(entry.owner_source, entry.link_destination,
                                          cursor, e, entry.learned_from))
        for piece in added:
            self.add(piece)
        return added, cut_own

    def check_invariants(self) -> None:
        for a, b in zip(self._entries, self._entries[1:]):
            if a.start > b.start:
                raise AssertionError("table not sorted")
            if a.end > b.start:
                raise AssertionError(f"overlap between {a} and {b}")


class OffsetHistory:
    """The last n committed offsets, oldest first."""

    def __init__(self, depth: int, values: Iterable[SimTime] = ()):
        self._values: deque[SimTime] = deque(values, maxlen=depth)

    def push(self, value: SimTime) -> None:
        self._values.append(value)

    def values(self) -> list[SimTime]:
        return list(self._values)

    def __len__(self) -> int:
        return len(self._values)


def frag_interval(ampdu_count_m: int, timing: FrameTiming, v_phy_bits_per_us: float = 24.0) -> SimTime:
    """Shortest gap that still holds one full RTS/CTS/A-MPDU(m)/ACK cycle."""
    if ampdu_count_m < 1:
        raise ValueError("ampdu_count_m must be at least 1")
    return (timing.rts_us + timing.sifs_us + timing.cts_us + timing.sifs_us
            + ampdu_count_m * timing.data_us(v_phy_bits_per_us)
            + timing.sifs_us + timing.ack_us)


def node_access_time(wra: float, params: ProtocolParams, t_access_us: SimTime) -> float:
    """Time one contention-set member needs per cycle, capped at D_max.

    Estimated backlog is WRA / mean weight, in bytes. Members with zero
    WRA have nothing to send and need no time.
    """
    if wra <= 0:
        return 0.0
    backlog_bytes = wra / params.mean_weight
    return min(float(params.d_max_us), backlog_bytes * 8 / params.v_phy_bits_per_us + t_access_us)


def basic_offset(neighbors: Iterable[NeighborRecord | float], params: ProtocolParams,
                 own_wra: float = 0.0, t_access_us: SimTime | None = None,
                 timing: FrameTiming | None = None) -> SimTime:
    if t_access_us is None:
        t_access_us = params.access_time(timing or FrameTiming())
    total = node_access_time(own_wra, params, t_access_us)
    for n in neighbors:
        wra = n.wra if isinstance(n, NeighborRecord) else float(n)
        total += node_access_time(wra, params, t_access_us)
    return round_half_up(total / params.th_res)


def lambda_bounds(params: ProtocolParams) -> tuple[float, float]:
    if params.clamp_mode == "lambda":
        return params.th_low, params.th_high
    # T_offset / T_basic = 1 / lambda must lie in [th_low, th_high].
    return 1.0 / params.th_high, 1.0 / params.th_low


def corrected_offset(t_basic: SimTime, lam: float, any_congested: bool, params: ProtocolParams) -> SimTime:
    if t_basic < 0:
        raise ValueError("t_basic must be non-negative")
    if not any_congested:
        return params.t_min_us
    if not lam > 0:
        raise NonPositiveLambda(f"lambda={lam}")
    lo, hi = lambda_bounds(params)
    clamped = min(max(lam, lo), hi)
    return round_half_up(t_basic / clamped)


def max_offset(t_basic: SimTime, params: ProtocolParams) -> SimTime:
    lo, _ = lambda_bounds(params)
    return round_half_up(t_basic / lo)


def smooth_offset(history: OffsetHistory | Sequence[SimTime], raw: SimTime, params: ProtocolParams) -> SimTime:
    past = history.values() if isinstance(history, OffsetHistory) else list(history)
    past = past[-params.inertia_depth_n:]
    if not past:
        return raw
    w = params.w_n
    return round_half_up(w / len(past) * sum(past) + (1 - w) * raw)


def reservation_duration(realtime_backlog_bytes: int, timing: FrameTiming, params: ProtocolParams,
                         with_rsi: bool = True) -> SimTime:
    """Time to clear the backlog in one exchange, capped at D_max.

    The backlog is cut into maximum-size MPDUs; the result covers their air
    time plus RTS/CTS/ACK, the inter-frame spaces, PHY preamble, MPDU
    framing and the carried RSI.
    """
    if realtime_backlog_bytes <= 0:
        raise ValueError("reservation needs a positive backlog")
    full, rest = divmod(realtime_backlog_bytes, timing.max_mpdu_bytes)
    lengths = [timing.max_mpdu_bytes] * full + ([rest] if rest else [])
    return min(params.d_max_us, timing.exchange_us(lengths, with_rsi, params.v_phy_bits_per_us))


def is_legal_start(table: ReservationTable, start: SimTime, duration: SimTime,
                   t_frag: SimTime, t_betmin: SimTime) -> bool:
    if not table.is_free(start, start + duration):
        return False
    prev_end = table.last_end_at_or_before(start)
    if prev_end is None:
        return True
    gap = start - prev_end
    return gap == t_betmin or gap >= t_frag


def earliest_legal_start(table: ReservationTable, earliest: SimTime, duration: SimTime,
                         t_frag: SimTime, t_betmin: SimTime) -> SimTime:
    """First legal start at or after ``earliest``.

    Only ``earliest`` itself and points at a fixed distance after some
    entry's end (0, ``t_betmin`` or ``t_frag``) can be the answer, so the
    candidates are walked lazily in time order.
    """
    if is_legal_start(table, earliest, duration, t_frag, t_betmin):
        return earliest
    entries = [e for e in table if e.end + t_frag > earliest]
    streams = [[e.end + shift for e in entries] for shift in sorted({0, t_betmin, t_frag})]
    for c in heapq.merge(*streams):
        if c > earliest and is_legal_start(table, c, duration, t_frag, t_betmin):
            return c
    raise AssertionError("no legal start found")  # unreachable: last end + t_frag is legal


def place_reservation(table: ReservationTable, now: SimTime, desired_offset: SimTime, duration: SimTime,
                      params: ProtocolParams, timing: FrameTiming, owner: NodeId = 0,
                      link_destination: NodeId = 0) -> ReservationEntry:
    """Pan the candidate interval to its earliest legal start and commit it.

    A start is legal when the interval overlaps nothing in the table and
    its gap to the latest earlier reservation is either exactly
    ``t_betmin_us`` or at least one fragmentation interval.
    """
    if duration <= 0 or duration > params.d_max_us:
        raise ValueError(f"duration {duration} outside (0, d_max]")
    if desired_offset < 0:
        raise ValueError("desired_offset must be non-negative")
    table.purge(now)
    t_frag = frag_interval(1, timing, params.v_phy_bits_per_us)
    start = earliest_legal_start(table, now + desired_offset, duration, t_frag, params.t_betmin_us)
    entry = ReservationEntry(owner, link_destination, start, start + duration, LEARNED_SELF)
    table.add(entry)
    return entry


def table_maintenance(table: ReservationTable, now: SimTime) -> ReservationTable:
    table.purge(now)
    return table


def query_silence(table: ReservationTable, now: SimTime, me: NodeId | None = None):
    """(start, end, owner) of the entry covering ``now``, if it silences ``me``."""
    e = table.covering(now)
    if e is None:
        return None
    if me is not None and not e.is_foreign_to(me):
        return None
    return e.start, e.end, e.owner_source

