"""Exchange operators: partitioning, the four send patterns and receive."""
from __future__ import annotations

import heapq
import logging
import threading
from typing import Iterable, Optional, Sequence

import numpy as np

from ..buffer_manager import BufferManager
from ..columnar import Batch, SelectionVector, Table, concat_batches
from ..dtypes import Schema
from ..errors import TransportError
from ..kernels.hashing import hash_columns
from ..kernels.sorting import order_codes
from .frame import ExchangeFrame
from .registry import TempTableRegistry
from .transport import Transport

log = logging.getLogger(__name__)

PATTERNS = ("broadcast", "shuffle", "merge", "multicast")


def partition_of(b: Batch, key_ordinals: Sequence[int], n: int) -> np.ndarray:
    """Destination partition of every row: key hash mod n."""
    if n == 1 or b.row_count == 0:
        return np.zeros(b.row_count, dtype=np.int64)
    h = hash_columns([b.columns[k] for k in key_ordinals], b.row_count)
    return (h % np.uint64(n)).astype(np.int64)


def partition_batch(b: Batch, key_ordinals: Sequence[int], n: int) -> list:
    """Split ``b`` into ``n`` batches by key hash, keeping row order within each."""
    if n < 1:
        raise ValueError("fanout must be at least 1")
    if n == 1:
        return [b]
    part = partition_of(b, key_ordinals, n)
    order = np.argsort(part, kind="stable")
    bounds = np.searchsorted(part[order], np.arange(n + 1))
    return [b.take(SelectionVector.wide(order[bounds[i]:bounds[i + 1]])) for i in range(n)]


class ExchangeService:
    """One node's endpoint: sends its fragments' outputs, holds what it receives."""

    def __init__(self, node_id: int, transport: Transport, buffers: Optional[BufferManager] = None):
        self.node_id = node_id
        self.transport = transport
        self.buffers = buffers
        self.registry = TempTableRegistry(buffers)
        self.frames_local = 0
        self._send_lock = threading.Lock()
        transport.attach(node_id, self.on_frame, getattr(self, "on_control", None))

    def on_frame(self, frame: ExchangeFrame) -> None:
        self.registry.add(frame, frame.batch())

    def _deliver(self, dst: int, frame: ExchangeFrame) -> None:
        if dst == self.node_id:
            self.frames_local += 1
            self.on_frame(frame)  # local hand-off, nothing on the wire
        else:
            self.transport.send(self.node_id, dst, frame)

    def send(self, query_id: int, exchange_id: int, pattern: str, batches: Iterable[Batch],
             targets: Sequence[int], keys: Sequence[int] = ()) -> dict:
        """Send a producer's output stream; returns rows sent per target.

        ``targets`` are destination node ids. For shuffle, partition i goes to
        ``targets[i]``; every other pattern sends the full stream to each
        target (merge expects exactly one). Each destination gets its own
        stream, numbered from 0 and closed by an end-of-stream frame.
        """
        if pattern not in PATTERNS:
            raise ValueError(f"unknown exchange pattern {pattern}")
        if pattern == "merge" and len(targets) != 1:
            raise ValueError("merge sends to exactly one consumer")
        targets = list(targets)
        seq = [0] * len(targets)
        rows = dict.fromkeys(targets, 0)
        for b in batches:
            if b.row_count == 0:
                continue
            if pattern == "shuffle":
                pieces = partition_batch(b, keys, len(targets))
            else:
                pieces = [b] * len(targets)
            for i, (dst, piece) in enumerate(zip(targets, pieces)):
                if piece.row_count == 0:
                    continue
                self._deliver(dst, ExchangeFrame.data(query_id, exchange_id, self.node_id, i, seq[i], piece))
                seq[i] += 1
                rows[dst] += piece.row_count
        for i, dst in enumerate(targets):
            self._deliver(dst, ExchangeFrame.end(query_id, exchange_id, self.node_id, i, seq[i]))
        return rows

    def receive(self, query_id: int, exchange_id: int, producers: Sequence[int], schema: Schema,
                mode: str = "collect", sort_keys=(), timeout: Optional[float] = 30.0,
                cancelled=None) -> Table:
        """Wait for every producer's stream and return the received table.

        collect: batches in (producer, sequence) order. merge: a k-way merge
        of the producers' sorted runs under ``sort_keys``.
        """
        entry = self.registry.wait(query_id, exchange_id, producers, timeout, cancelled)
        if cancelled is not None and cancelled():
            raise TransportError(f"exchange {exchange_id}: receive cancelled")
        runs = [batches for _, batches in entry.runs()]
        name = f"exchange_{exchange_id}"
        if mode == "collect":
            return Table(name, schema, [b for run in runs for b in run])
        if mode != "merge":
            raise ValueError(f"unknown receive mode {mode}")
        return Table(name, schema, [merge_runs([concat_batches(r, schema.types) for r in runs if r], sort_keys, schema.types)])

    def deregister(self, query_id: int, exchange_id: int, consumer=None) -> None:
        self.registry.deregister(query_id, exchange_id, consumer)

    # operation names used by the plan-level exchange contract
    exchange_send = send
    exchange_receive = receive


def merge_runs(runs: Sequence[Batch], sort_keys, types) -> Batch:
    """K-way merge of individually sorted batches; ties keep run order."""
    runs = [r for r in runs if r.row_count]
    if not runs:
        return Batch.empty(types)
    if len(runs) == 1:
        return runs[0]
    allb = concat_batches(runs, types)
    # comparable per-row keys computed once over all runs
    parts = []
    for k in sort_keys:
        c = allb.columns[k.ordinal]
        code = order_codes(c, k.descending).tolist()
        if c.validity is not None:
            m = c.mask.tolist()
            flag = [(0 if v else 1) if not k.nulls_first else (1 if v else 0) for v in m]
        else:
            flag = [0 if not k.nulls_first else 1] * allb.row_count
        parts += [flag, code]
    keys = list(zip(*parts)) if parts else [()] * allb.row_count
    starts = np.cumsum([0] + [r.row_count for r in runs]).tolist()
    streams = [range(starts[i], starts[i + 1]) for i in range(len(runs))]
    order = np.fromiter(heapq.merge(*streams, key=keys.__getitem__), dtype=np.int64, count=allb.row_count)
    return allb.take(SelectionVector.wide(order))
