"""Event queue and unit-disk interference channel."""

from __future__ import annotations

import heapq
import itertools
from collections import Counter
from collections.abc import Callable

from .core import NodeId, SimTime

# Same-instant ordering: a frame that ends at t must be off the air before
# anything that starts at t, and sleep/wake bookkeeping precedes protocol
# actions.
PRIO_TX_END = 0
PRIO_EDGE = 1
PRIO_DEFAULT = 2


class EventQueue:
    def __init__(self):
        self._heap: list = []
        self._seq = itertools.count()
        self.now: SimTime = 0

    def schedule(self, time: SimTime, fn: Callable, *args, prio: int = PRIO_DEFAULT) -> None:
        if time < self.now:
            raise ValueError(f"cannot schedule at {time} before now={self.now}")
        heapq.heappush(self._heap, (time, prio, next(self._seq), fn, args))

    def run(self, until: SimTime) -> None:
        """Process every event strictly before ``until``."""
        heap = self._heap
        while heap and heap[0][0] < until:
            time, _, _, fn, args = heapq.heappop(heap)
            self.now = time
            fn(*args)
        self.now = until

    def __len__(self) -> int:
        return len(self._heap)


class Transmission:
    __slots__ = ("id", "sender", "frame", "start", "end", "lost")

    def __init__(self, tx_id: int, sender: NodeId, frame, start: SimTime, end: SimTime):
        self.id = tx_id
        self.sender = sender
        self.frame = frame
        self.start = start
        self.end = end
        # receiver -> reason the frame is lost there
        self.lost: dict[NodeId, str] = {}

    def __hash__(self):
        return self.id

    def __eq__(self, other):
        return self is other


class Channel:
    """Collision-only unit-disk channel.

    Every node within range of the sender hears the frame. A reception fails
    when another in-range transmission overlaps it, when the receiver is
    itself transmitting, or when the receiver sleeps at any point of it.
    """

    def __init__(self, adjacency: list[list[NodeId]], queue: EventQueue):
        self.adj = adjacency
        self.queue = queue
        n = len(adjacency)
        self.rx_active: list[set[Transmission]] = [set() for _ in range(n)]
        self.transmitting: list[Transmission | None] = [None] * n
        self.asleep = [False] * n
        self.nodes: list = []
        self._ids = itertools.count()
        self.collisions = 0
        self.reserved_collisions = 0
        self.lost_asleep = 0
        self.loss_reasons: Counter[str] = Counter()

    def attach(self, nodes: list) -> None:
        self.nodes = nodes

    def is_busy(self, node: NodeId) -> bool:
        return self.transmitting[node] is not None or bool(self.rx_active[node])

    def transmit(self, sender: NodeId, frame) -> Transmission:
        now = self.queue.now
        if self.transmitting[sender] is not None:
            raise RuntimeError(f"node {sender} is already transmitting")
        tx = Transmission(next(self._ids), sender, frame, now, now + frame.duration_us)
        for other in self.rx_active[sender]:
            other.lost.setdefault(sender, "half_duplex")
        self.transmitting[sender] = tx
        for r in self.adj[sender]:
            if self.asleep[r]:
                tx.lost[r] = "asleep"
            elif self.transmitting[r] is not None:
                tx.lost[r] = "half_duplex"
            active = self.rx_active[r]
            if active:
                tx.lost.setdefault(r, "overlap")
                for other in active:
                    other.lost.setdefault(r, "overlap")
            active.add(tx)
        self.queue.schedule(tx.end, self._end, tx, prio=PRIO_TX_END)
        nodes = self.nodes
        for r in self.adj[sender]:
            nodes[r].carrier_changed(now)
        return tx

    def _end(self, tx: Transmission) -> None:
        now = self.queue.now
        sender = tx.sender
        self.transmitting[sender] = None
        frame = tx.frame
        nodes = self.nodes
        for r in self.adj[sender]:
            self.rx_active[r].discard(tx)
        nodes[sender].tx_finished(tx, now)
        for r in self.adj[sender]:
            reason = tx.lost.get(r)
            if reason is None:
                nodes[r].receive(tx, now)
            elif r == frame.dst:
                self.loss_reasons[frame.kind + ":" + reason + (":res" if frame.reserved else "")] += 1
                if reason == "asleep":
                    self.lost_asleep += 1
                else:
                    self.collisions += 1
                    if frame.reserved:
                        self.reserved_collisions += 1
        for r in self.adj[sender]:
            nodes[r].carrier_changed(now)

    def set_asleep(self, node: NodeId, asleep: bool) -> None:
        self.asleep[node] = asleep
        if asleep:
            for tx in self.rx_active[node]:
                tx.lost.setdefault(node, "asleep")
