"""Registry of exchanged intermediates held as temporary tables."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Optional

from ..buffer_manager import PROCESSING, BufferManager
from ..columnar import serialize_batch
from ..errors import SequenceGap, TransportError, UnknownEntry


@dataclass
class _Stream:
    batches: dict = field(default_factory=dict)  # sequence -> Batch
    eos_seq: Optional[int] = None


@dataclass
class TempEntry:
    query_id: int
    exchange_id: int
    streams: dict = field(default_factory=dict)  # (producer, partition) -> _Stream
    refcount: int = 1
    reservations: list = field(default_factory=list)
    error: Optional[BaseException] = None
    frames: int = 0

    def producers_done(self) -> set:
        return {p for (p, _), s in self.streams.items() if s.eos_seq is not None}

    def runs(self) -> list:
        """Per (producer, partition) batch lists in key order; checks for gaps."""
        out = []
        for key in sorted(self.streams):
            s = self.streams[key]
            if s.eos_seq is None:
                raise SequenceGap(f"exchange {self.exchange_id}: stream {key} has no end-of-stream")
            missing = [i for i in range(s.eos_seq) if i not in s.batches]
            extra = [i for i in s.batches if i >= s.eos_seq]
            if missing or extra:
                raise SequenceGap(f"exchange {self.exchange_id}: stream {key} missing {missing[:5]} extra {extra[:5]}")
            out.append((key, [s.batches[i] for i in range(s.eos_seq)]))
        return out


class TempTableRegistry:
    def __init__(self, buffers: Optional[BufferManager] = None):
        self.buffers = buffers
        self._entries: dict = {}
        self.cond = threading.Condition()

    def __len__(self):
        with self.cond:
            return len(self._entries)

    def keys(self) -> list:
        with self.cond:
            return sorted(self._entries)

    def _entry(self, query_id: int, exchange_id: int) -> TempEntry:
        key = (query_id, exchange_id)
        e = self._entries.get(key)
        if e is None:
            e = self._entries[key] = TempEntry(query_id, exchange_id)
        return e

    def add(self, frame, batch) -> None:
        """Record one received frame (``batch`` is None for end-of-stream)."""
        res = None
        if batch is not None and self.buffers is not None and batch.nbytes > 0:
            try:
                res = self.buffers.reserve(PROCESSING, batch.nbytes, owner=f"exchange:{frame.query_id}/{frame.exchange_id}")
            except Exception as exc:  # noqa: BLE001 - surfaced to the receiver
                with self.cond:
                    self._entry(frame.query_id, frame.exchange_id).error = exc
                    self.cond.notify_all()
                return
        with self.cond:
            e = self._entry(frame.query_id, frame.exchange_id)
            s = e.streams.setdefault((frame.producer, frame.partition), _Stream())
            e.frames += 1
            if res is not None:
                e.reservations.append(res)
            if batch is None:
                s.eos_seq = frame.sequence
            else:
                s.batches[frame.sequence] = batch
            self.cond.notify_all()

    def open(self, query_id: int, exchange_id: int, consumers: int = 1) -> None:
        """Create the entry up front and fix how many consumers will deregister it."""
        with self.cond:
            self._entry(query_id, exchange_id).refcount = consumers

    def wait(self, query_id: int, exchange_id: int, producers, timeout: Optional[float], cancelled=None) -> TempEntry:
        """Block until every expected producer has ended its stream(s)."""
        expected = set(producers)
        with self.cond:
            def ready():
                e = self._entries.get((query_id, exchange_id))
                if e is not None and e.error is not None:
                    return True
                if cancelled is not None and cancelled():
                    return True
                return e is not None and expected <= e.producers_done()

            if not self.cond.wait_for(ready, timeout):
                got = sorted(self._entries[(query_id, exchange_id)].producers_done()) if (query_id, exchange_id) in self._entries else []
                raise TransportError(f"exchange {exchange_id}: timed out waiting for producers {sorted(expected)} (finished: {got})")
            e = self._entries.get((query_id, exchange_id))
            if e is None:
                e = self._entry(query_id, exchange_id)
            if e.error is not None:
                raise e.error
            return e

    def get(self, query_id: int, exchange_id: int) -> TempEntry:
        with self.cond:
            try:
                return self._entries[(query_id, exchange_id)]
            except KeyError:
                raise UnknownEntry(f"no exchange entry ({query_id}, {exchange_id})") from None

    def deregister(self, query_id: int, exchange_id: int, consumer=None) -> None:
        with self.cond:
            key = (query_id, exchange_id)
            e = self._entries.get(key)
            if e is None:
                raise UnknownEntry(f"no exchange entry {key} (consumer {consumer})")
            e.refcount -= 1
            if e.refcount > 0:
                return
            del self._entries[key]
        for r in e.reservations:
            r.release()

    def drop_query(self, query_id: int) -> None:
        """Forget every entry of a query (used after aborts)."""
        with self.cond:
            keys = [k for k in self._entries if k[0] == query_id]
            entries = [self._entries.pop(k) for k in keys]
            self.cond.notify_all()
        for e in entries:
            for r in e.reservations:
                if not r.released:
                    r.release()

    def snapshot(self) -> dict:
        """Comparable view: key -> {(producer, partition): [serialized batches]}."""
        with self.cond:
            out = {}
            for key, e in sorted(self._entries.items()):
                out[key] = {
                    sk: [serialize_batch(s.batches[i]) for i in sorted(s.batches)] + [("eos", s.eos_seq)]
                    for sk, s in sorted(e.streams.items())
                }
            return out
