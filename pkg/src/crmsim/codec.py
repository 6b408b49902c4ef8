"""RSI wire format and MAC frame construction.

Reservation instruction field, 22 bytes, network byte order::

    owner address        6
    link destination     6
    offset (us)          4   unsigned
    duration (us)        4   unsigned
    WRA (16-byte units)  2   unsigned, saturating

Offsets count from the end of the A-MPDU that carries the instruction.
Node ids map onto locally administered unicast addresses 02:00:00:00:hh:ll.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .core import FrameTiming, NodeId, ProtocolParams, QueuedPacket, SimTime, round_half_up

RSI_FORMAT = ">6s6sIIH"
RSI_LEN = struct.calcsize(RSI_FORMAT)
WRA_MAX_UNITS = 0xFFFF
U32_MAX = 0xFFFFFFFF

# Frame control type/subtype; RSI uses a reserved data subtype.
TYPE_CONTROL = 1
TYPE_DATA = 2
SUBTYPES = {
    "rts": (TYPE_CONTROL, 0b1011),
    "cts": (TYPE_CONTROL, 0b1100),
    "ack": (TYPE_CONTROL, 0b1101),
    "data_ampdu": (TYPE_DATA, 0b1000),
    "rsi": (TYPE_DATA, 0b1101),
}
FRAME_KINDS = tuple(SUBTYPES)

_ADDR_PREFIX = b"\x02\x00\x00\x00"


class FieldOverflow(ValueError):
    pass


class TruncatedFrame(ValueError):
    pass


class InvalidDuration(ValueError):
    pass


def node_address(node: NodeId) -> bytes:
    if not 0 <= node <= 0xFFFF:
        raise FieldOverflow(f"node id {node} does not fit the address plan")
    return _ADDR_PREFIX + node.to_bytes(2, "big")


def address_node(addr: bytes) -> NodeId:
    if len(addr) != 6:
        raise TruncatedFrame("address must be 6 bytes")
    return int.from_bytes(addr[4:], "big")


def quantize_wra(wra: float, quantum_bytes: int = 16) -> int:
    return min(WRA_MAX_UNITS, round_half_up(wra / quantum_bytes))


def dequantize_wra(units: int, quantum_bytes: int = 16) -> float:
    return float(units * quantum_bytes)


@dataclass(frozen=True)
class RsiInstruction:
    owner_source: bytes
    link_destination: bytes
    offset_us: int
    duration_us: int
    wra: int  # quantized units

    @classmethod
    def for_nodes(cls, owner: NodeId, dest: NodeId, offset_us: int, duration_us: int, wra_units: int):
        return cls(node_address(owner), node_address(dest), offset_us, duration_us, wra_units)

    @property
    def owner_node(self) -> NodeId:
        return address_node(self.owner_source)

    @property
    def destination_node(self) -> NodeId:
        return address_node(self.link_destination)


def encode_rsi(instr: RsiInstruction) -> bytes:
    if len(instr.owner_source) != 6 or len(instr.link_destination) != 6:
        raise FieldOverflow("addresses must be 6 bytes")
    for name in ("offset_us", "duration_us"):
        v = getattr(instr, name)
        if not 0 <= v <= U32_MAX:
            raise FieldOverflow(f"{name}={v} does not fit 32 bits")
    if not 0 <= instr.wra <= WRA_MAX_UNITS:
        raise FieldOverflow(f"wra={instr.wra} does not fit 16 bits")
    return struct.pack(RSI_FORMAT, instr.owner_source, instr.link_destination,
                       instr.offset_us, instr.duration_us, instr.wra)


def decode_rsi(data: bytes, d_max_us: int | None = None) -> RsiInstruction:
    if len(data) != RSI_LEN:
        raise TruncatedFrame(f"RSI field is {len(data)} bytes, expected {RSI_LEN}")
    owner, dest, offset, duration, wra = struct.unpack(RSI_FORMAT, data)
    if d_max_us is not None and duration > d_max_us:
        raise InvalidDuration(f"duration {duration} exceeds {d_max_us}")
    return RsiInstruction(owner, dest, offset, duration, wra)


def encode_header(kind: str, duration_us: int, receiver: NodeId, transmitter: NodeId) -> bytes:
    """Frame control, duration and the two addresses of an 802.11 header."""
    ftype, subtype = SUBTYPES[kind]
    fc = (ftype << 2) | (subtype << 4)
    return struct.pack("<HH", fc, min(duration_us, 0x7FFF)) + node_address(receiver) + node_address(transmitter)


def decode_header(data: bytes) -> tuple[str, int, NodeId, NodeId]:
    if len(data) < 16:
        raise TruncatedFrame("header shorter than 16 bytes")
    fc, duration = struct.unpack("<HH", data[:4])
    key = ((fc >> 2) & 0b11, (fc >> 4) & 0b1111)
    for kind, code in SUBTYPES.items():
        if code == key:
            return kind, duration, address_node(data[4:10]), address_node(data[10:16])
    raise ValueError(f"unknown type/subtype {key}")


@dataclass
class MacFrame:
    """One PPDU on the air.

    ``nav_us`` is the header duration field: how long the medium stays
    reserved after this frame ends. ``rsi`` holds the encoded instruction
    field when the frame carries one.
    """

    kind: str
    src: NodeId
    dst: NodeId
    duration_us: SimTime
    nav_us: SimTime = 0
    packets: tuple[QueuedPacket, ...] = ()
    rsi: bytes | None = None
    reserved: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SUBTYPES:
            raise ValueError(f"unknown frame kind {self.kind}")
        if self.kind != "data_ampdu" and self.packets:
            raise ValueError("only A-MPDUs carry packets")
        if self.rsi is not None and self.kind not in ("data_ampdu", "ack", "rsi"):
            raise ValueError("RSI rides in an A-MPDU or an ACK")

    def header(self) -> bytes:
        return encode_header(self.kind, self.nav_us, self.dst, self.src)


def build_ampdu(packets, rsi: RsiInstruction | bytes | None, params: ProtocolParams,
                timing: FrameTiming | None = None, src: NodeId = 0, dst: NodeId = 0,
                nav_us: SimTime = 0) -> MacFrame:
    """Aggregate packets, with the RSI as the final MPDU."""
    timing = timing or FrameTiming()
    packets = tuple(packets)
    if not packets and rsi is None:
        raise ValueError("an A-MPDU needs at least one packet or an RSI")
    raw = encode_rsi(rsi) if isinstance(rsi, RsiInstruction) else rsi
    air = timing.ampdu_us([p.length_bytes for p in packets], raw is not None, params.v_phy_bits_per_us)
    return MacFrame("data_ampdu", src, dst, air, nav_us, packets, raw)


def ack_for(data: MacFrame, params: ProtocolParams, timing: FrameTiming | None = None) -> MacFrame:
    """ACK to a received A-MPDU, forwarding any RSI it carried."""
    timing = timing or FrameTiming()
    if data.rsi is not None:
        air = timing.ack_with_rsi_us(params.v_phy_bits_per_us)
    else:
        air = timing.ack_us
    return MacFrame("ack", data.dst, data.src, air, 0, (), data.rsi, data.reserved)
