"""Per-node MAC: RTS/CTS CSMA/CA plus the reservation variants.

Three variants share one state machine and identical PHY timing:

* ``baseline_csma``: DCF-style contention with RTS/CTS, no reservations.
* ``fixed_reservation``: after each transmission with real-time backlog
  left, reserve the next slot a constant offset ahead.
* ``ftkn_crm``: the adaptive variant. The offset follows the node's load
  relative to its contention set, and the contention window class
  follows the correction factor.

Backoff is event driven: a countdown is scheduled when the medium turns
idle and frozen (remaining slots recomputed) when it turns busy.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .codec import MacFrame, RsiInstruction, InvalidDuration, ack_for, build_ampdu, decode_rsi, dequantize_wra, quantize_wra
from .core import EnergyAccumulator, NodeId, ProtocolParams, QueuedPacket, SimTime
from .engine import PRIO_EDGE, Transmission
from .reservation import (LEARNED_ACK, LEARNED_DIRECT, NonPositiveLambda, OffsetHistory, ReservationEntry,
                          ReservationTable, basic_offset, corrected_offset, max_offset, place_reservation,
                          reservation_duration, smooth_offset)
from .wra import (NeighborRecord, WraState, compute_wra, congestion_wra_threshold, is_any_neighbor_congested,
                  live_neighbors, refresh_wra_state)

BASELINE = "baseline_csma"
FIXED = "fixed_reservation"
FTKN = "ftkn_crm"
VARIANTS = (BASELINE, FIXED, FTKN)

IDLE = "idle"
BACKOFF = "backoff"
AWAITING_CTS = "awaiting_cts"
TRANSMITTING = "transmitting"
AWAITING_ACK = "awaiting_ack"
RESERVED_HOLD = "reserved_transmitting"

CW_CLASSES = ("low", "general", "high")


def cw_bounds(cw_class: str, params: ProtocolParams) -> tuple[int, int]:
    if cw_class == "low":
        return params.cw_low, params.cw_general
    if cw_class == "general":
        return params.cw_general, params.cw_high
    if cw_class == "high":
        return params.cw_high, 2 * params.cw_high + 1
    return params.cw_baseline_min, params.cw_baseline_max


def select_cw_class(lam: float | None, pending_reservation_links_all_served: bool,
                    params: ProtocolParams) -> str:
    """Contention window class of the channel access phase; low wins ties."""
    if lam is not None and lam > params.th_less:
        return "low"
    if pending_reservation_links_all_served:
        return "high"
    return "general"


def on_backoff_slot(counter: int, channel_busy: bool) -> tuple[int, bool]:
    """One slot of backoff. Returns (counter, transmit_now)."""
    if counter == 0:
        return 0, True
    if channel_busy:
        return counter, False
    return counter - 1, False


def on_collision_or_timeout(cw: int, retries: int, cw_class: str,
                            params: ProtocolParams) -> tuple[int, int, bool]:
    """Binary exponential growth inside the class bounds. Returns (cw, retries, dropped)."""
    lo, hi = cw_bounds(cw_class, params)
    retries += 1
    if retries > params.retry_limit:
        return lo, 0, True
    return min(2 * cw + 1, hi), retries, False


def on_success(cw_class: str, params: ProtocolParams) -> int:
    return cw_bounds(cw_class, params)[0]


@dataclass
class Attempt:
    dst: NodeId
    packets: list[QueuedPacket]
    with_rsi: bool
    total_us: SimTime
    reserved: bool
    start: SimTime = 0


class Node:
    """MAC state of one node, driven by the simulator's event loop."""

    def __init__(self, sim, node_id: NodeId):
        self.sim = sim
        self.id = node_id
        self.params: ProtocolParams = sim.params
        self.timing = sim.timing
        self.variant = sim.variant
        p = self.params
        self.rng = random.Random(f"{sim.seed}:mac:{node_id}")
        self.next_hop = sim.routes.next_hop[node_id]
        self.queue: list[QueuedPacket] = []
        self.inflight: list[QueuedPacket] = []
        self.table = ReservationTable()
        self.history = OffsetHistory(p.inertia_depth_n)
        self.neighbors: dict[NodeId, NeighborRecord] = {}
        self.wra_state = WraState()
        self.energy = EnergyAccumulator()
        self.phase = IDLE
        self.counter: int | None = None
        self.count_start: SimTime | None = None
        self.fire_at: SimTime = 0
        self._gen = 0
        self._ex_gen = 0
        self.cw_class = "general" if self.variant == FTKN else "baseline"
        self.cw = cw_bounds(self.cw_class, p)[0]
        self.retries = 0
        self.nav_until: SimTime = 0
        self.engaged_until: SimTime = 0
        self.last_rx_start: SimTime = -1
        self._last_slot_start: SimTime = -1
        # silenced nodes wake this long before a foreign interval ends
        self._wake_lead = self.timing.ack_with_rsi_us(p.v_phy_bits_per_us)
        self.asleep = False
        self.attempt: Attempt | None = None
        self.saturated_flows: list[tuple[int, NodeId]] = []
        self._flow_rr = 0
        self.stats = {
            "reservations": 0, "reserved_us": 0, "reserved_used_us": 0, "reserved_idle": 0,
            "tx_success": 0, "tx_fail": 0, "silencing_violations": 0, "cw_rule_violations": 0,
            "rsi_invalid": 0, "lambda_sum": 0.0, "lambda_n": 0,
        }
        self.reservation_log: list[tuple[SimTime, SimTime, NodeId]] = []

    # buffer -----------------------------------------------------------

    def buffered(self) -> int:
        return len(self.queue) + len(self.inflight)

    def has_room(self) -> bool:
        return self.buffered() < self.params.buffer_capacity_packets

    def enqueue(self, pkt: QueuedPacket, now: SimTime) -> None:
        self.queue.append(pkt)
        if self.phase == IDLE:
            self.reevaluate(now)

    def refill(self, now: SimTime) -> None:
        """Saturated sources top their buffer up once it is half empty."""
        if not self.saturated_flows:
            return
        cap = self.params.buffer_capacity_packets
        if self.buffered() * 2 >= cap:
            return
        while self.buffered() < cap:
            flow, dst = self.saturated_flows[self._flow_rr % len(self.saturated_flows)]
            self._flow_rr += 1
            self.queue.append(self.sim.new_packet(self.id, dst, flow, now))

    # medium -------------------------------------------------------------

    def _min_exchange(self) -> SimTime:
        head = self.queue[0]
        with_rsi = self.variant != BASELINE
        return self.timing.exchange_us([head.length_bytes], with_rsi, self.params.v_phy_bits_per_us)

    def _medium_idle(self, now: SimTime) -> bool:
        ch = self.sim.channel
        if self.asleep or ch.transmitting[self.id] is not None or ch.rx_active[self.id]:
            return False
        if now < self.nav_until or now < self.engaged_until:
            return False
        if self.table.covering(now) is not None:
            return False
        nxt = self.table.next_start_after(now)
        if nxt is not None and now + self._min_exchange() > nxt:
            return False
        return True

    def carrier_changed(self, now: SimTime) -> None:
        if self.sim.channel.rx_active[self.id]:
            self.last_rx_start = now
        self.reevaluate(now)

    def reevaluate(self, now: SimTime) -> None:
        if self.phase not in (IDLE, BACKOFF):
            return
        if not self.queue:
            self._freeze(now)
            self.phase = IDLE
            return
        if self.counter is None:
            self._draw_backoff(now)
        self.phase = BACKOFF
        if self._medium_idle(now):
            if self.count_start is None:
                self.count_start = now
                self._gen += 1
                self.fire_at = now + self.timing.difs_us + self.counter * self.timing.slot_us
                self.sim.queue.schedule(self.fire_at, self._backoff_done, self._gen)
        else:
            self._freeze(now)

    def _freeze(self, now: SimTime) -> None:
        if self.count_start is None:
            return
        if self.fire_at <= now:
            # Busy onset in the very slot the countdown ends: too late to sense.
            return
        elapsed = now - self.count_start - self.timing.difs_us
        if elapsed > 0:
            self.counter = max(0, self.counter - elapsed // self.timing.slot_us)
        self.count_start = None
        self._gen += 1

    def _draw_backoff(self, now: SimTime) -> None:
        p = self.params
        if self.variant == FTKN:
            lam = self.wra_state.lam
            served = self._links_all_served(now)
            cls = select_cw_class(lam, served, p)
            if cls != self.cw_class:
                self.cw_class = cls
                self.cw = cw_bounds(cls, p)[0]
            if lam is not None and lam > p.th_less and cls != "low":
                self.stats["cw_rule_violations"] += 1
            self.sim.trace.emit("backoff", now, self.id, cls, self.cw, lam, served)
        self.counter = self.rng.randint(0, self.cw)

    def _links_all_served(self, now: SimTime) -> bool:
        holders = {e.owner_source for e in self.table if e.end > now}
        if any(p.is_realtime for p in self.queue) and self.id not in holders:
            return False
        for rec in live_neighbors(self.neighbors, now, self.params):
            if rec.wra > 0 and rec.node not in holders:
                return False
        return True

    def _backoff_done(self, gen: int) -> None:
        if gen != self._gen:
            return
        now = self.sim.queue.now
        self.count_start = None
        self.counter = 0
        if self.phase != BACKOFF or not self.queue or self.asleep:
            return
        if self.sim.channel.transmitting[self.id] is not None or now < self.engaged_until:
            return
        if self.table.covering(now) is not None:
            return
        limit = now + self.params.txop_limit_us
        nxt = self.table.next_start_after(now)
        if nxt is not None:
            limit = min(limit, nxt)
        plan = self._plan(now, limit)
        if plan is None:
            return
        self._start_exchange(now, plan)

    # sending --------------------------------------------------------------

    def _plan(self, now: SimTime, limit: SimTime, dst: NodeId | None = None,
              reserved: bool = False) -> Attempt | None:
        if not self.queue:
            return None
        nh = self.next_hop
        if dst is None:
            dst = self._contention_destination(now)
        cands = [pk for pk in self.queue if nh[pk.final_destination] == dst]
        if not cands:
            return None
        rt_total = sum(1 for pk in self.queue if pk.is_realtime)
        budget = limit - now
        v = self.params.v_phy_bits_per_us
        reserving = self.variant != BASELINE
        m = len(cands)
        while m > 0:
            chosen = cands[:m]
            rt_left = rt_total - sum(1 for pk in chosen if pk.is_realtime)
            with_rsi = reserving and rt_left > 0
            total = self.timing.exchange_us([pk.length_bytes for pk in chosen], with_rsi, v)
            if total <= budget:
                return Attempt(dst, chosen, with_rsi, total, reserved)
            # every extra MPDU costs at least this much, so skip ahead
            over = total - budget
            per = self.timing.mpdu_us(chosen[-1].length_bytes, v)
            m -= max(1, over // max(per, 1))
        return None

    def _contention_destination(self, now: SimTime) -> NodeId:
        """Next hop of the oldest packet whose link holds no pending own reservation."""
        nh = self.next_hop
        pending = {e.link_destination for e in self.table if e.owner_source == self.id and e.end > now}
        if pending:
            for pk in self.queue:
                d = nh[pk.final_destination]
                if d not in pending:
                    return d
        return nh[self.queue[0].final_destination]

    def _start_exchange(self, now: SimTime, plan: Attempt) -> None:
        self._freeze(now)
        self.count_start = None
        self._gen += 1
        plan.start = now
        self.attempt = plan
        chosen = set(id(pk) for pk in plan.packets)
        self.queue = [pk for pk in self.queue if id(pk) not in chosen]
        self.inflight = list(plan.packets)
        t = self.timing
        self.phase = TRANSMITTING
        if not self.sim.rts_cts:
            self._ex_gen += 1
            self._send_data(self._ex_gen)
            return
        rts = MacFrame("rts", self.id, plan.dst, t.rts_us, plan.total_us - t.rts_us, reserved=plan.reserved)
        self._transmit(rts, now)

    def _transmit(self, frame: MacFrame, now: SimTime) -> Transmission:
        end = now + frame.duration_us
        for e in self.table:
            if e.start >= end:
                break
            if e.overlaps(now, end) and e.is_foreign_to(self.id):
                self.stats["silencing_violations"] += 1
                break
        self.energy.switch(now, "tx")
        self.sim.trace.emit("tx", now, self.id, frame.kind, frame.dst, frame.duration_us, frame.reserved)
        return self.sim.channel.transmit(self.id, frame)

    def _foreign_overlap(self, start: SimTime, end: SimTime, partner: NodeId) -> bool:
        """True if [start, end) touches any entry other than one of this link's own."""
        pair = (self.id, partner)
        for e in self.table:
            if e.start >= end:
                break
            if e.overlaps(start, end) and not (e.owner_source in pair and e.link_destination in pair):
                return True
        return False

    def tx_finished(self, tx: Transmission, now: SimTime) -> None:
        self.energy.switch(now, "sleep" if self.asleep else "listen")
        kind = tx.frame.kind
        t = self.timing
        if self.attempt is not None and tx.frame.src == self.id and kind in ("rts", "data_ampdu"):
            self._ex_gen += 1
            if kind == "rts":
                self.phase = AWAITING_CTS
                deadline = now + t.sifs_us + t.cts_us + t.slot_us
            else:
                self.phase = AWAITING_ACK
                ack = t.ack_with_rsi_us(self.params.v_phy_bits_per_us) if tx.frame.rsi else t.ack_us
                deadline = now + t.sifs_us + ack + t.slot_us
            self.sim.queue.schedule(deadline, self._timeout, self._ex_gen)
        self._update_sleep(now)

    def _timeout(self, gen: int) -> None:
        if gen != self._ex_gen or self.attempt is None:
            return
        self.sim.diag[("res_" if self.attempt.reserved else "") + "timeout_" + self.phase] += 1
        self._finish_attempt(self.sim.queue.now, success=False)

    def _send_data(self, gen: int) -> None:
        if gen != self._ex_gen or self.attempt is None:
            return
        now = self.sim.queue.now
        a = self.attempt
        t = self.timing
        v = self.params.v_phy_bits_per_us
        air = t.ampdu_us([pk.length_bytes for pk in a.packets], a.with_rsi, v)
        ack = t.ack_with_rsi_us(v) if a.with_rsi else t.ack_us
        if self._foreign_overlap(now, now + air + t.sifs_us + ack, a.dst) or self.asleep:
            self._finish_attempt(now, success=False)
            return
        rsi = None
        if a.with_rsi:
            rsi = self._reserve(now, now + air)
        frame = build_ampdu(a.packets, rsi, self.params, t, self.id, a.dst, t.sifs_us + ack)
        if rsi is None and a.with_rsi:
            # nothing to announce after all; the shorter A-MPDU still fits
            frame.nav_us = t.sifs_us + t.ack_us
        frame.reserved = a.reserved
        self.phase = TRANSMITTING
        self._transmit(frame, now)

    def _finish_attempt(self, now: SimTime, success: bool) -> None:
        a = self.attempt
        self.attempt = None
        self._ex_gen += 1
        p = self.params
        if success:
            self.stats["tx_success"] += 1
            self.retries = 0
            self.cw = on_success(self.cw_class, p)
            if a.reserved:
                self.stats["reserved_used_us"] += now - a.start
        else:
            self.stats["tx_fail"] += 1
            self.cw, self.retries, dropped = on_collision_or_timeout(self.cw, self.retries, self.cw_class, p)
            if dropped:
                for pk in self.inflight:
                    self.sim.drop(pk, "retry", self.id, now)
            else:
                self.queue = self.inflight + self.queue
        self.inflight = []
        self.phase = IDLE
        self.counter = None
        self.refill(now)
        self.reevaluate(now)

    # reservation phase ------------------------------------------------------

    def _reserve(self, now: SimTime, ampdu_end: SimTime) -> RsiInstruction | None:
        """Pick, place and announce the next reservation; None if no backlog."""
        p = self.params
        nh = self.next_hop
        # one pending reservation per link: it already covers that link's next transmission
        pending = {e.link_destination for e in self.table if e.owner_source == self.id and e.start > now}
        remaining = [pk for pk in self.queue if pk.is_realtime]
        link = next((nh[pk.final_destination] for pk in remaining
                     if nh[pk.final_destination] not in pending), None)
        if link is None:
            return None
        backlog = sum(pk.length_bytes for pk in remaining if nh[pk.final_destination] == link)
        duration = reservation_duration(backlog, self.timing, p)
        if self.variant == FTKN:
            offset = self._adaptive_offset(now)
        else:
            offset = p.fixed_offset_us
        entry = place_reservation(self.table, ampdu_end, offset, duration, p, self.timing,
                                  owner=self.id, link_destination=link)
        self.stats["reservations"] += 1
        self.stats["reserved_us"] += entry.duration
        self.reservation_log.append((entry.start, entry.end, link))
        self._schedule_entry(entry, now)
        wra = compute_wra(self._buffer(), p)
        self.sim.trace.emit("reserve", now, self.id, link, entry.start, entry.end, offset)
        return RsiInstruction.for_nodes(self.id, link, entry.start - ampdu_end, entry.duration,
                                        quantize_wra(wra, p.wra_quantum_bytes))

    def _buffer(self):
        return self.queue + self.inflight

    def _adaptive_offset(self, now: SimTime) -> SimTime:
        p = self.params
        neigh = live_neighbors(self.neighbors, now, p)
        self.wra_state = refresh_wra_state(self.wra_state, self._buffer(), neigh, now, p,
                                           transmit_opportunity=True)
        self._sample_lambda()
        own = self.wra_state.own_wra
        if not neigh:
            raw = p.t_min_us
        else:
            t_basic = basic_offset(neigh, p, own_wra=own, t_access_us=self.sim.t_access_us)
            congested = is_any_neighbor_congested([*neigh, own], self.sim.congestion_threshold)
            try:
                raw = corrected_offset(t_basic, self.wra_state.lam, congested, p)
            except NonPositiveLambda:
                raw = max_offset(t_basic, p)
        smoothed = smooth_offset(self.history, raw, p)
        self.history.push(smoothed)
        return smoothed

    def _sample_lambda(self) -> None:
        lam = self.wra_state.lam
        if lam is not None and lam != float("inf"):
            self.stats["lambda_sum"] += lam
            self.stats["lambda_n"] += 1

    def wra_tick(self) -> None:
        now = self.sim.queue.now
        neigh = live_neighbors(self.neighbors, now, self.params)
        self.wra_state = refresh_wra_state(self.wra_state, self._buffer(), neigh, now, self.params)
        self._sample_lambda()
        self.sim.queue.schedule(now + self.params.wra_update_period_us, self.wra_tick)

    def _schedule_entry(self, entry: ReservationEntry, now: SimTime) -> None:
        q = self.sim.queue
        q.schedule(max(entry.start, now), self._edge, prio=PRIO_EDGE)
        q.schedule(max(entry.end, now), self._edge, prio=PRIO_EDGE)
        wake = entry.end - self._wake_lead
        if entry.is_foreign_to(self.id) and wake > max(entry.start, now):
            q.schedule(wake, self._edge, prio=PRIO_EDGE)
        if entry.owner_source == self.id and entry.start >= now:
            q.schedule(entry.start, self._reservation_start, entry.start)

    def _reservation_start(self, start: SimTime) -> None:
        now = self.sim.queue.now
        e = self.table.covering(now)
        if e is None or e.owner_source != self.id or e.start != start or start == self._last_slot_start:
            return
        self._last_slot_start = start
        if self.phase not in (IDLE, BACKOFF) or now < self.engaged_until or self.asleep \
                or self.sim.channel.transmitting[self.id] is not None:
            self.stats["reserved_idle"] += 1
            self.sim.diag["res_skip_busy_" + self.phase] += 1
            return
        plan = self._plan(now, e.end, dst=e.link_destination, reserved=True)
        if plan is None:
            self.stats["reserved_idle"] += 1
            self.sim.diag["res_skip_noplan"] += 1
            return
        # Finish flush with the interval end, so the closing ACK lands in the
        # window where silenced neighbors wake to overhear it.
        begin = e.end - plan.total_us
        if begin > now:
            self._freeze(now)
            self.phase = RESERVED_HOLD
            self.sim.queue.schedule(begin, self._begin_reserved, plan)
        else:
            self._start_exchange(now, plan)

    def _begin_reserved(self, plan: Attempt) -> None:
        now = self.sim.queue.now
        self.phase = IDLE
        if self.asleep or self.sim.channel.transmitting[self.id] is not None:
            self.reevaluate(now)
            return
        self._start_exchange(now, plan)

    def _edge(self) -> None:
        now = self.sim.queue.now
        self.table.purge(now)
        self._update_sleep(now)
        self.reevaluate(now)

    def _update_sleep(self, now: SimTime) -> None:
        if self.sim.channel.transmitting[self.id] is not None:
            return
        e = self.table.covering(now)
        silent = e is not None and e.is_foreign_to(self.id) and now < e.end - self._wake_lead
        if silent and not self.asleep:
            self.asleep = True
            self.sim.channel.set_asleep(self.id, True)
            self.energy.switch(now, "sleep")
        elif not silent and self.asleep:
            self.asleep = False
            self.sim.channel.set_asleep(self.id, False)
            self.energy.switch(now, "listen")

    # receiving ------------------------------------------------------------

    def receive(self, tx: Transmission, now: SimTime) -> None:
        f = tx.frame
        kind = f.kind
        if kind == "rts":
            if f.dst == self.id:
                self._on_rts(f, now)
            else:
                prev = self.nav_until
                self._set_nav(now + f.nav_us, now)
                t = self.timing
                check = now + 2 * t.sifs_us + t.cts_us + 2 * t.slot_us
                self.sim.queue.schedule(check, self._nav_reset, now, prev, self.nav_until)
        elif kind == "cts":
            if f.dst == self.id:
                if self.phase == AWAITING_CTS and self.attempt is not None and f.src == self.attempt.dst:
                    self._ex_gen += 1
                    self.phase = TRANSMITTING
                    self.sim.queue.schedule(now + self.timing.sifs_us, self._send_data, self._ex_gen)
            else:
                self._set_nav(now + f.nav_us, now)
        elif kind == "data_ampdu":
            if f.rsi is not None:
                self._heard_rsi(f.rsi, tx.end, now, via_ack=False)
            if f.dst == self.id:
                self._on_data(f, now)
            else:
                self._set_nav(now + f.nav_us, now)
        elif kind == "ack":
            if f.dst == self.id:
                if self.phase == AWAITING_ACK and self.attempt is not None and f.src == self.attempt.dst:
                    self._finish_attempt(now, success=True)
            elif f.rsi is not None:
                self._heard_rsi(f.rsi, tx.start - self.timing.sifs_us, now, via_ack=True)

    def _nav_reset(self, rts_end: SimTime, prev: SimTime, set_to: SimTime) -> None:
        """Drop an RTS-set NAV when no exchange followed the RTS."""
        if self.last_rx_start > rts_end or self.nav_until != set_to:
            return
        self.nav_until = prev
        self.reevaluate(self.sim.queue.now)

    def _set_nav(self, until: SimTime, now: SimTime) -> None:
        if until > self.nav_until:
            self.nav_until = until
            self.sim.queue.schedule(until, self._edge, prio=PRIO_EDGE)
        self.reevaluate(now)

    def _on_rts(self, f: MacFrame, now: SimTime) -> None:
        diag = self.sim.diag
        if self.phase not in (IDLE, BACKOFF):
            diag["rts_refused_busy" + ("_res" if f.reserved else "")] += 1
            return
        if now < self.nav_until or now < self.engaged_until:
            diag["rts_refused_nav" + ("_res" if f.reserved else "")] += 1
            return
        if self.asleep or self.sim.channel.transmitting[self.id] is not None:
            diag["rts_refused_busy" + ("_res" if f.reserved else "")] += 1
            return
        end = now + f.nav_us
        if self._foreign_overlap(now, end, f.src):
            diag["rts_refused_reserved" + ("_res" if f.reserved else "")] += 1
            return
        self._freeze(now)
        self.engaged_until = end
        self.sim.queue.schedule(end, self._edge, prio=PRIO_EDGE)
        self.sim.queue.schedule(now + self.timing.sifs_us, self._send_cts, f.src, end)

    def _send_cts(self, partner: NodeId, end: SimTime) -> None:
        now = self.sim.queue.now
        t = self.timing
        if self.asleep or self.sim.channel.transmitting[self.id] is not None:
            return
        if self.phase not in (IDLE, BACKOFF):
            return
        if self._foreign_overlap(now, now + t.cts_us, partner):
            return
        self._transmit(MacFrame("cts", self.id, partner, t.cts_us, max(0, end - now - t.cts_us)), now)

    def _on_data(self, f: MacFrame, now: SimTime) -> None:
        for pk in f.packets:
            self.sim.accept(pk, f.src, self, now)
        ack = ack_for(f, self.params, self.timing)
        self.engaged_until = max(self.engaged_until, now + self.timing.sifs_us + ack.duration_us)
        self.sim.queue.schedule(now + self.timing.sifs_us, self._send_ack, ack)

    def _send_ack(self, ack: MacFrame) -> None:
        now = self.sim.queue.now
        if self.asleep or self.sim.channel.transmitting[self.id] is not None:
            return
        if self._foreign_overlap(now, now + ack.duration_us, ack.dst):
            return
        self._transmit(ack, now)

    def _heard_rsi(self, raw: bytes, ampdu_end: SimTime, now: SimTime, via_ack: bool) -> None:
        p = self.params
        try:
            instr = decode_rsi(raw, p.d_max_us)
        except InvalidDuration:
            self.stats["rsi_invalid"] += 1
            return
        owner = instr.owner_node
        if owner == self.id:
            return
        hop = 2 if via_ack else 1
        old = self.neighbors.get(owner)
        if via_ack and old is not None and old.hop_distance == 1 and old.is_live(now, p.staleness_us):
            hop = 1
        self.neighbors[owner] = NeighborRecord(owner, dequantize_wra(instr.wra, p.wra_quantum_bytes), now, hop)
        if instr.duration_us == 0:
            return
        start = ampdu_end + instr.offset_us
        end = start + instr.duration_us
        if end <= now:
            return
        entry = ReservationEntry(owner, instr.destination_node, start, end,
                                 LEARNED_ACK if via_ack else LEARNED_DIRECT)
        added, cut = self.table.insert_heard(entry, self.id)
        for piece in added:
            self._schedule_entry(piece, now)
        for piece in cut:
            if piece.start > now:
                self.sim.queue.schedule(piece.start, self._reservation_start, piece.start)
        if added:
            self._update_sleep(now)
            self.reevaluate(now)
