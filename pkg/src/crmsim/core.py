"""Shared domain types, time arithmetic and protocol-wide constants.

All simulation time is an integer number of microseconds. Real-valued
intermediate results are rounded half-up at the point they become a time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

SimTime = int
NodeId = int

PACKET_BYTES = 1500

# Radio power draw per state, milliwatts.
TX_POWER_MW = 24.0
RX_POWER_MW = 13.5
SLEEP_POWER_MW = 0.015


class InvalidParams(ValueError):
    """Raised when a ProtocolParams or FrameTiming violates an invariant."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name
        self.message = message


def round_half_up(x: float) -> SimTime:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class QueuedPacket:
    id: int
    source: NodeId
    final_destination: NodeId
    length_bytes: int = PACKET_BYTES
    hop_count: int = 0
    created_at: SimTime = 0
    is_realtime: bool = True
    flow: int = 0

    def __post_init__(self):
        if self.length_bytes <= 0:
            raise ValueError("packet length must be positive")
        if self.hop_count < 0:
            raise ValueError("hop_count must be non-negative")

    def forwarded(self) -> "QueuedPacket":
        return replace(self, hop_count=self.hop_count + 1)


@dataclass(frozen=True)
class FrameTiming:
    """PHY/MAC timing of one scenario.

    Control frames have fixed air times; data MPDUs are sized at the PHY
    rate with a per-MPDU framing overhead (MAC header, FCS, A-MPDU
    delimiter).
    """

    sifs_us: SimTime = 64
    slot_us: SimTime = 36
    preamble_us: SimTime = 40
    rts_us: SimTime = 52
    cts_us: SimTime = 44
    ack_us: SimTime = 44
    mpdu_overhead_bytes: int = 38
    rsi_bytes: int = 22
    max_mpdu_bytes: int = PACKET_BYTES
    data_mpdu_us: SimTime | None = None

    @property
    def difs_us(self) -> SimTime:
        return self.sifs_us + 2 * self.slot_us

    def mpdu_us(self, payload_bytes: int, v_phy_bits_per_us: float) -> SimTime:
        return round_half_up((payload_bytes + self.mpdu_overhead_bytes) * 8 / v_phy_bits_per_us)

    def data_us(self, v_phy_bits_per_us: float) -> SimTime:
        """Air time of one maximum-size data MPDU."""
        if self.data_mpdu_us is not None:
            return self.data_mpdu_us
        return self.mpdu_us(self.max_mpdu_bytes, v_phy_bits_per_us)

    def rsi_mpdu_us(self, v_phy_bits_per_us: float) -> SimTime:
        return self.mpdu_us(self.rsi_bytes, v_phy_bits_per_us)

    def ack_with_rsi_us(self, v_phy_bits_per_us: float) -> SimTime:
        return self.ack_us + round_half_up(self.rsi_bytes * 8 / v_phy_bits_per_us)

    def ampdu_us(self, lengths, with_rsi: bool, v_phy_bits_per_us: float) -> SimTime:
        """PPDU air time: preamble plus each MPDU rounded on its own."""
        total = self.preamble_us
        for n in lengths:
            total += self.mpdu_us(n, v_phy_bits_per_us)
        if with_rsi:
            total += self.rsi_mpdu_us(v_phy_bits_per_us)
        return total

    def exchange_us(self, lengths, with_rsi: bool, v_phy_bits_per_us: float) -> SimTime:
        """RTS/CTS/A-MPDU/ACK sequence, from RTS start to ACK end."""
        ack = self.ack_with_rsi_us(v_phy_bits_per_us) if with_rsi else self.ack_us
        return (self.rts_us + self.cts_us + ack + 3 * self.sifs_us
                + self.ampdu_us(lengths, with_rsi, v_phy_bits_per_us))


@dataclass(frozen=True)
class ProtocolParams:
    weight_local: float = 0.4
    weight_relay: float = 1.0
    mean_weight: float = 0.7
    th_buffer: float = 0.40
    buffer_capacity_packets: int = 100
    mean_packet_bytes: int = PACKET_BYTES
    th_res: float = 0.8
    th_low: float = 0.5
    th_high: float = 2.0
    th_less: float = 1.5
    w_n: float = 0.6
    inertia_depth_n: int = 3
    t_min_us: SimTime = 2000
    t_betmin_us: SimTime = 500
    d_max_us: SimTime = 5000
    v_phy_bits_per_us: float = 24.0
    t_access_us: SimTime | None = None
    cw_low: int = 7
    cw_general: int = 15
    cw_high: int = 31
    cw_baseline_min: int = 7
    cw_baseline_max: int = 15
    retry_limit: int = 7
    txop_limit_us: SimTime = 5000
    wra_update_period_us: SimTime = 50_000
    staleness_periods: int = 4
    wra_quantum_bytes: int = 16
    clamp_mode: str = "ratio"
    fixed_offset_us: SimTime = 8000

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.weight_local < self.weight_relay:
            raise InvalidParams("weight_local", "must be smaller than weight_relay")
        if self.mean_weight <= 0:
            raise InvalidParams("mean_weight", "must be positive")
        if not 0.0 <= self.th_buffer <= 1.0:
            raise InvalidParams("th_buffer", "must lie in [0, 1]")
        if self.buffer_capacity_packets < 1:
            raise InvalidParams("buffer_capacity_packets", "must be at least 1")
        if not 0.0 < self.th_res <= 1.0:
            raise InvalidParams("th_res", "must lie in (0, 1]")
        if not 0.0 < self.th_low <= self.th_high:
            raise InvalidParams("th_low", "need 0 < th_low <= th_high")
        if not 0.0 <= self.w_n < 1.0:
            raise InvalidParams("w_n", "must lie in [0, 1)")
        if self.inertia_depth_n < 1:
            raise InvalidParams("inertia_depth_n", "must be at least 1")
        if not self.cw_low < self.cw_general < self.cw_high:
            raise InvalidParams("cw_low", "need cw_low < cw_general < cw_high")
        if not 0 <= self.cw_baseline_min <= self.cw_baseline_max:
            raise InvalidParams("cw_baseline_min", "need cw_baseline_min <= cw_baseline_max")
        if self.v_phy_bits_per_us <= 0:
            raise InvalidParams("v_phy_bits_per_us", "must be positive")
        for name in ("t_min_us", "t_betmin_us", "d_max_us", "wra_update_period_us",
                     "txop_limit_us", "fixed_offset_us"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise InvalidParams(name, "must be a non-negative integer number of microseconds")
        if self.d_max_us == 0:
            raise InvalidParams("d_max_us", "must be positive")
        if self.t_access_us is not None and (not isinstance(self.t_access_us, int) or self.t_access_us < 0):
            raise InvalidParams("t_access_us", "must be a non-negative integer number of microseconds")
        if self.clamp_mode not in ("ratio", "lambda"):
            raise InvalidParams("clamp_mode", "must be 'ratio' or 'lambda'")
        if self.wra_quantum_bytes < 1:
            raise InvalidParams("wra_quantum_bytes", "must be at least 1")
        if self.staleness_periods < 1:
            raise InvalidParams("staleness_periods", "must be at least 1")

    def weight(self, hop_count: int) -> float:
        return self.weight_local if hop_count == 0 else self.weight_relay

    @property
    def staleness_us(self) -> SimTime:
        return self.staleness_periods * self.wra_update_period_us

    def access_time(self, timing: FrameTiming) -> SimTime:
        """Per-exchange access overhead: the configured value, or one derived from the timing."""
        if self.t_access_us is not None:
            return self.t_access_us
        return derive_t_access(self, timing)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def derive_t_access(params: ProtocolParams, timing: FrameTiming) -> SimTime:
    """Control overhead of one exchange plus the mean backoff of the general window."""
    control = (timing.rts_us + timing.cts_us + timing.ack_us + 3 * timing.sifs_us)
    return control + round_half_up(params.cw_general / 2 * timing.slot_us)


def default_params(**overrides) -> ProtocolParams:
    """Default configuration, with mean_weight kept consistent when weights change."""
    base = ProtocolParams()
    if not overrides:
        return base
    mean = overrides.get("mean_weight")
    if mean is None and ("weight_local" in overrides or "weight_relay" in overrides):
        lo = overrides.get("weight_local", base.weight_local)
        hi = overrides.get("weight_relay", base.weight_relay)
        overrides["mean_weight"] = (lo + hi) / 2
    return replace(base, **overrides)


def default_timing(**overrides) -> FrameTiming:
    return replace(FrameTiming(), **overrides)


@dataclass
class EnergyAccumulator:
    """Per-node radio time in each power state, integer microseconds."""

    tx_time: SimTime = 0
    rx_listen_time: SimTime = 0
    sleep_time: SimTime = 0
    state: str = "listen"
    since: SimTime = 0

    def switch(self, now: SimTime, state: str) -> None:
        self.advance(now)
        self.state = state

    def advance(self, now: SimTime) -> None:
        elapsed = now - self.since
        if elapsed < 0:
            raise ValueError("energy clock moved backwards")
        if self.state == "tx":
            self.tx_time += elapsed
        elif self.state == "sleep":
            self.sleep_time += elapsed
        else:
            self.rx_listen_time += elapsed
        self.since = now

    @property
    def total_time(self) -> SimTime:
        return self.tx_time + self.rx_listen_time + self.sleep_time

    def energy_mj(self) -> float:
        # mW * us = 1e-6 mJ
        return (TX_POWER_MW * self.tx_time + RX_POWER_MW * self.rx_listen_time
                + SLEEP_POWER_MW * self.sleep_time) * 1e-6
