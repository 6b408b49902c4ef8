import dataclasses

import pytest

from crmsim.core import (
    PACKET_BYTES,
    EnergyAccumulator,
    FrameTiming,
    InvalidParams,
    ProtocolParams,
    QueuedPacket,
    default_params,
    default_timing,
    derive_t_access,
    round_half_up,
)


def test_protocol_defaults():
    p = default_params()
    assert p.weight_local == 0.4
    assert p.weight_relay == 1.0
    assert p.d_max_us == 5000
    assert p.th_buffer == 0.40
    assert p.w_n == 0.6
    assert p.cw_baseline_min == 7 and p.cw_baseline_max == 15
    t = default_timing()
    assert t.sifs_us == 64 and t.slot_us == 36
    assert PACKET_BYTES == 1500


def test_artifact_defaults():
    p = default_params()
    assert (p.th_res, p.th_low, p.th_high, p.th_less) == (0.8, 0.5, 2.0, 1.5)
    assert (p.t_min_us, p.t_betmin_us, p.inertia_depth_n) == (2000, 500, 3)
    assert (p.cw_low, p.cw_general, p.cw_high) == (7, 15, 31)
    assert p.wra_update_period_us == 50_000
    assert p.v_phy_bits_per_us == 24
    assert p.buffer_capacity_packets == 100
    assert p.mean_weight == pytest.approx((0.4 + 1.0) / 2)
    assert p.fixed_offset_us == 4 * p.t_min_us


def test_mean_weight_follows_changed_weights():
    p = default_params(weight_local=0.2, weight_relay=0.8)
    assert p.mean_weight == pytest.approx(0.5)
    assert default_params(weight_local=0.2, mean_weight=0.9).mean_weight == 0.9


@pytest.mark.parametrize("field,value", [
    ("th_res", 0.0),
    ("th_res", 1.5),
    ("weight_local", 1.0),
    ("w_n", 1.0),
    ("th_low", 3.0),
    ("inertia_depth_n", 0),
    ("cw_low", 15),
    ("t_min_us", -1),
    ("t_min_us", 1.5),
    ("clamp_mode", "both"),
    ("buffer_capacity_packets", 0),
    ("th_buffer", 1.2),
])
def test_invalid_params_name_their_field(field, value):
    with pytest.raises(InvalidParams) as err:
        default_params(**{field: value})
    assert err.value.field


def test_params_are_immutable():
    p = ProtocolParams()
    with pytest.raises(dataclasses.FrozenInstanceError):
        p.th_res = 0.5


def test_round_half_up():
    assert round_half_up(0.5) == 1
    assert round_half_up(1.4999) == 1
    assert round_half_up(2.5) == 3
    assert round_half_up(4464.2857) == 4464


def test_packet_forwarding_increments_hop_count_only():
    pk = QueuedPacket(1, 0, 5, 1500, 0, 10, True, 2)
    fw = pk.forwarded()
    assert fw.hop_count == 1
    assert (fw.id, fw.source, fw.final_destination, fw.created_at, fw.flow) == (1, 0, 5, 10, 2)
    with pytest.raises(ValueError):
        QueuedPacket(2, 0, 1, 0)


def test_mpdu_air_time():
    t = FrameTiming()
    # (1500 + 38) bytes * 8 / 24 bits per us = 512.67 -> 513
    assert t.mpdu_us(1500, 24) == 513
    assert t.data_us(24) == 513
    assert FrameTiming(data_mpdu_us=500).data_us(24) == 500
    # 22-byte RSI over the ACK: 22 * 8 / 24 = 7.33 -> 7
    assert t.ack_with_rsi_us(24) == 44 + 7


def test_ampdu_is_additive_in_mpdus():
    t = FrameTiming()
    one = t.ampdu_us([1500], False, 24) - t.preamble_us
    three = t.ampdu_us([1500, 1500, 1500], False, 24) - t.preamble_us
    assert three == 3 * one
    with_rsi = t.ampdu_us([1500], True, 24)
    assert with_rsi - t.ampdu_us([1500], False, 24) == t.rsi_mpdu_us(24)


def test_exchange_time_single_packet():
    t = FrameTiming()
    # RTS 52 + CTS 44 + ACK 44 + 3 SIFS + preamble 40 + MPDU 513
    assert t.exchange_us([1500], False, 24) == 52 + 44 + 44 + 192 + 40 + 513


def test_derived_access_time():
    p = default_params()
    t = default_timing()
    control = 52 + 44 + 44 + 3 * 64
    assert derive_t_access(p, t) == control + round_half_up(15 / 2 * 36)
    assert p.access_time(t) == derive_t_access(p, t)
    assert default_params(t_access_us=500).access_time(t) == 500


def test_energy_partition_and_power_arithmetic():
    acc = EnergyAccumulator()
    acc.switch(100, "tx")
    acc.switch(300, "listen")
    acc.switch(1000, "sleep")
    acc.advance(5000)
    assert (acc.tx_time, acc.rx_listen_time, acc.sleep_time) == (200, 800, 4000)
    assert acc.total_time == 5000
    expected = (24 * 200 + 13.5 * 800 + 0.015 * 4000) * 1e-6
    assert acc.energy_mj() == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ValueError):
        acc.advance(10)


def test_idle_listening_energy():
    acc = EnergyAccumulator()
    acc.advance(1_000_000)
    assert acc.energy_mj() == pytest.approx(13.5, rel=1e-12)
