import json
import random
from pathlib import Path

import pytest

from crmsim.codec import (
    RSI_LEN,
    FieldOverflow,
    InvalidDuration,
    MacFrame,
    RsiInstruction,
    TruncatedFrame,
    ack_for,
    build_ampdu,
    decode_header,
    decode_rsi,
    dequantize_wra,
    encode_header,
    encode_rsi,
    node_address,
    quantize_wra,
)
from crmsim.core import QueuedPacket, default_params, default_timing

VECTORS = json.loads((Path(__file__).parent / "data" / "rsi_vectors.json").read_text())
P = default_params()


def test_field_is_22_bytes():
    assert RSI_LEN == 22


@pytest.mark.parametrize("vec", VECTORS, ids=lambda v: v["hex"][:24])
def test_golden_vectors(vec):
    instr = RsiInstruction.for_nodes(vec["owner"], vec["dest"], vec["offset_us"], vec["duration_us"], vec["wra_units"])
    raw = encode_rsi(instr)
    assert raw.hex() == vec["hex"]
    back = decode_rsi(bytes.fromhex(vec["hex"]))
    assert back == instr
    assert (back.owner_node, back.destination_node) == (vec["owner"], vec["dest"])


def test_random_round_trip():
    rng = random.Random(11)
    for _ in range(10_000):
        instr = RsiInstruction(
            bytes(rng.randrange(256) for _ in range(6)),
            bytes(rng.randrange(256) for _ in range(6)),
            rng.randrange(2**32), rng.randrange(2**32), rng.randrange(2**16),
        )
        raw = encode_rsi(instr)
        assert len(raw) == RSI_LEN
        assert decode_rsi(raw) == instr
        assert encode_rsi(decode_rsi(raw)) == raw


def test_truncated_and_oversized_fields():
    raw = bytes.fromhex(VECTORS[0]["hex"])
    for n in (0, 1, 21):
        with pytest.raises(TruncatedFrame):
            decode_rsi(raw[:n])
    with pytest.raises(TruncatedFrame):
        decode_rsi(raw + b"\x00")
    with pytest.raises(FieldOverflow):
        encode_rsi(RsiInstruction.for_nodes(1, 2, 2**32, 0, 0))
    with pytest.raises(FieldOverflow):
        encode_rsi(RsiInstruction.for_nodes(1, 2, 0, 0, 2**16))
    with pytest.raises(FieldOverflow):
        node_address(70_000)


def test_duration_above_cap_is_rejected():
    raw = encode_rsi(RsiInstruction.for_nodes(1, 2, 10, P.d_max_us + 1, 0))
    with pytest.raises(InvalidDuration):
        decode_rsi(raw, d_max_us=P.d_max_us)
    assert decode_rsi(raw).duration_us == P.d_max_us + 1
    ok = encode_rsi(RsiInstruction.for_nodes(1, 2, 10, P.d_max_us, 0))
    assert decode_rsi(ok, d_max_us=P.d_max_us).duration_us == P.d_max_us


def test_wra_quantization():
    assert quantize_wra(0) == 0
    assert quantize_wra(2700) == 169  # 168.75 rounds up
    assert quantize_wra(8) == 1
    assert quantize_wra(7.9) == 0
    assert quantize_wra(1e9) == 0xFFFF
    assert dequantize_wra(169) == 2704.0


@pytest.mark.parametrize("kind", ["rts", "cts", "ack", "data_ampdu", "rsi"])
def test_header_round_trip(kind):
    raw = encode_header(kind, 300, receiver=7, transmitter=3)
    assert len(raw) == 16
    assert decode_header(raw) == (kind, 300, 7, 3)


def test_header_duration_saturates_and_short_header_fails():
    assert decode_header(encode_header("rts", 10**6, 1, 2))[1] == 0x7FFF
    with pytest.raises(TruncatedFrame):
        decode_header(b"\x00" * 15)


def test_ampdu_carries_rsi_as_last_mpdu_and_ack_forwards_it():
    t = default_timing()
    pk = [QueuedPacket(i, 0, 1, 1500) for i in range(3)]
    instr = RsiInstruction.for_nodes(0, 1, 2232, 1000, 169)
    frame = build_ampdu(pk, instr, P, t, src=0, dst=1)
    assert frame.duration_us == t.ampdu_us([1500] * 3, True, P.v_phy_bits_per_us)
    assert decode_rsi(frame.rsi) == instr
    ack = ack_for(frame, P, t)
    assert (ack.src, ack.dst, ack.kind) == (1, 0, "ack")
    assert ack.rsi == frame.rsi
    assert ack.duration_us == t.ack_with_rsi_us(P.v_phy_bits_per_us)
    plain = ack_for(build_ampdu(pk, None, P, t, src=0, dst=1), P, t)
    assert plain.rsi is None and plain.duration_us == t.ack_us


def test_frame_validation():
    with pytest.raises(ValueError):
        build_ampdu([], None, P)
    with pytest.raises(ValueError):
        MacFrame("rts", 0, 1, 52, packets=(QueuedPacket(1, 0, 1, 100),))
    with pytest.raises(ValueError):
        MacFrame("cts", 0, 1, 44, rsi=b"\x00" * 22)
    with pytest.raises(ValueError):
        MacFrame("beacon", 0, 1, 10)
