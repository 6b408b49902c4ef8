"""Discrete-event simulator for an adaptive channel-reservation MAC in multi-hop ad hoc networks."""

from .core import FrameTiming, ProtocolParams, QueuedPacket, default_params, default_timing
from .mac import BASELINE, FIXED, FTKN, VARIANTS
from .metrics import MetricsReport
from .simulator import RunSpec, Simulator, run

__all__ = [
    "FrameTiming", "ProtocolParams", "QueuedPacket", "default_params", "default_timing",
    "BASELINE", "FIXED", "FTKN", "VARIANTS", "MetricsReport", "RunSpec", "Simulator", "run",
]
