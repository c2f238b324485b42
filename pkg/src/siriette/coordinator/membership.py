"""Node membership driven by heartbeats."""
from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

log = logging.getLogger(__name__)

ALIVE, SUSPECT, DEAD = "alive", "suspect", "dead"


@dataclass
class NodeInfo:
    node_id: int
    address: Optional[tuple]
    last_beat: float
    status: str = ALIVE


class Membership:
    """A node is dead once ``timeout`` passes without a beat, suspect after half of it."""

    def __init__(self, timeout: float = 3.0, clock: Callable[[], float] = time.monotonic):
        self.timeout = timeout
        self.clock = clock
        self.nodes: dict[int, NodeInfo] = {}
        self._lock = threading.Lock()

    def join(self, node_id: int, address: Optional[tuple] = None) -> None:
        with self._lock:
            self.nodes[node_id] = NodeInfo(node_id, address, self.clock())

    def leave(self, node_id: int) -> None:
        with self._lock:
            self.nodes.pop(node_id, None)

    def beat(self, node_id: int) -> None:
        with self._lock:
            info = self.nodes[node_id]
            info.last_beat = self.clock()
            if info.status != ALIVE:
                log.info("node %d is back", node_id)
            info.status = ALIVE

    def refresh(self) -> dict:
        """Re-derive every status from the clock; returns node id -> status."""
        now = self.clock()
        with self._lock:
            for info in self.nodes.values():
                age = now - info.last_beat
                status = DEAD if age > self.timeout else SUSPECT if age > self.timeout / 2 else ALIVE
                if status != info.status and status == DEAD:
                    log.warning("node %d declared dead after %.2fs without heartbeat", info.node_id, age)
                info.status = status
            return {n: i.status for n, i in self.nodes.items()}

    def status(self, node_id: int) -> str:
        return self.refresh()[node_id]

    def alive(self) -> list:
        """Ids of nodes that may receive work (suspect nodes still count)."""
        return sorted(n for n, s in self.refresh().items() if s != DEAD)

    def address(self, node_id: int) -> Optional[tuple]:
        return self.nodes[node_id].address


class HeartbeatMonitor:
    """Pings every member each ``interval`` seconds and records the answers."""

    def __init__(self, membership: Membership, ping: Callable[[int], bool], interval: float = 0.5):
        if interval >= membership.timeout:
            raise ValueError("heartbeat interval must be shorter than the timeout")
        self.membership = membership
        self.ping = ping
        self.interval = interval
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def tick(self) -> dict:
        for node_id in list(self.membership.nodes):
            try:
                ok = self.ping(node_id)
            except Exception:  # noqa: BLE001 - an unreachable node simply misses its beat
                ok = False
            if ok:
                self.membership.beat(node_id)
        return self.membership.refresh()

    def start(self) -> "HeartbeatMonitor":
        self._thread = threading.Thread(target=self._run, daemon=True, name="heartbeat")
        self._thread.start()
        return self

    def _run(self):
        while not self._stop.wait(self.interval):
            self.tick()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join()


def heartbeat_loop(membership: Membership, ping: Callable[[int], bool], interval: float) -> HeartbeatMonitor:
    """Start a background monitor keeping ``membership`` current."""
    return HeartbeatMonitor(membership, ping, interval).start()
