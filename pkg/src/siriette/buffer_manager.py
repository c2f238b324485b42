"""Two-region memory accounting.

The caching region holds base tables and is committed up front; the
processing region is a pool for intermediates. All sizes are logical
(derived from the columnar layout), not what the allocator reports.
"""
from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Optional

from .columnar import Table
from .errors import CacheFull, ProcessingExhausted

CACHING = "caching"
PROCESSING = "processing"
DEFAULT_TOTAL_BYTES = 1 << 30


@dataclass
class Region:
    kind: str
    capacity: int
    used: int = 0
    high_water: int = 0

    def snapshot(self) -> dict:
        return {"capacity": self.capacity, "used": self.used, "high_water": self.high_water}


class Reservation:
    """A single-use grant of ``granted`` bytes in one region."""

    __slots__ = ("kind", "granted", "owner", "_manager", "_released")

    def __init__(self, manager: "BufferManager", kind: str, granted: int, owner):
        self._manager = manager
        self.kind = kind
        self.granted = granted
        self.owner = owner
        self._released = False

    @property
    def released(self) -> bool:
        return self._released

    def release(self) -> None:
        self._manager.release(self)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        if not self._released:
            self.release()

    def __repr__(self):
        return f"Reservation({self.kind}, {self.granted}, owner={self.owner!r})"


@dataclass
class CacheEntry:
    table: Table
    resident_bytes: int
    pin_count: int = 0
    reservation: Optional[Reservation] = field(default=None, repr=False)

    @property
    def name(self) -> str:
        return self.table.name

    @property
    def batches(self):
        return self.table.batches


class BufferManager:
    def __init__(self, caching_bytes: int, processing_bytes: int):
        if caching_bytes < 0 or processing_bytes < 0:
            raise ValueError("region capacities must be non-negative")
        self._lock = threading.Lock()
        self.regions = {
            CACHING: Region(CACHING, caching_bytes),
            PROCESSING: Region(PROCESSING, processing_bytes),
        }
        self._cache: dict[str, CacheEntry] = {}
        self._live: dict[int, Reservation] = {}
        self._ids = itertools.count()
        self.exhaustion_events = 0
        self.cache_full_events = 0
        self.ingested_bytes = 0

    @classmethod
    def split(cls, total_bytes: int = DEFAULT_TOTAL_BYTES, caching_fraction: float = 0.5) -> "BufferManager":
        """Split one memory budget between the two regions (half each by default)."""
        caching = int(total_bytes * caching_fraction)
        return cls(caching, total_bytes - caching)

    @property
    def caching(self) -> Region:
        return self.regions[CACHING]

    @property
    def processing(self) -> Region:
        return self.regions[PROCESSING]

    def reserve(self, kind: str, nbytes: int, owner=None) -> Reservation:
        if nbytes <= 0:
            raise ValueError("reservation size must be positive")
        region = self.regions[kind]
        with self._lock:
            if region.used + nbytes > region.capacity:
                if kind == PROCESSING:
                    self.exhaustion_events += 1
                    raise ProcessingExhausted(
                        f"processing region: {nbytes} bytes requested by {owner!r}, "
                        f"{region.capacity - region.used} of {region.capacity} free"
                    )
                self.cache_full_events += 1
                raise CacheFull(f"caching region: {nbytes} bytes requested, {region.capacity - region.used} free")
            region.used += nbytes
            region.high_water = max(region.high_water, region.used)
            r = Reservation(self, kind, nbytes, owner)
            self._live[id(r)] = r
            return r

    def try_reserve(self, kind: str, nbytes: int, owner=None) -> Optional[Reservation]:
        """Like reserve, but zero bytes yields None instead of an error."""
        if nbytes <= 0:
            return None
        return self.reserve(kind, nbytes, owner)

    def release(self, r: Reservation) -> None:
        with self._lock:
            if r._released:
                raise RuntimeError(f"{r!r} released twice")
            r._released = True
            self.regions[r.kind].used -= r.granted
            self._live.pop(id(r), None)

    def cache_table(self, t: Table) -> CacheEntry:
        """Cache ``t``; caching an already-resident name returns the existing entry."""
        with self._lock:
            entry = self._cache.get(t.name)
        if entry is not None:
            return entry
        size = t.nbytes
        res = self.reserve(CACHING, size, owner=f"table:{t.name}") if size > 0 else None
        if res is None and self.caching.capacity == 0:
            self.cache_full_events += 1
            raise CacheFull("caching region has zero capacity")
        entry = CacheEntry(t, size, reservation=res)
        with self._lock:
            existing = self._cache.get(t.name)
            if existing is not None:
                if res is not None:
                    res._released = True
                    self.caching.used -= size
                    self._live.pop(id(res), None)
                return existing
            self._cache[t.name] = entry
            self.ingested_bytes += size
        return entry

    def cached(self, name: str) -> Optional[CacheEntry]:
        with self._lock:
            return self._cache.get(name)

    def evict(self, name: str) -> None:
        """Drop a cached table (used only when a workspace is torn down)."""
        with self._lock:
            entry = self._cache.pop(name)
            if entry.pin_count:
                self._cache[name] = entry
                raise RuntimeError(f"table {name} is pinned")
        if entry.reservation is not None:
            entry.reservation.release()

    def pin(self, name: str) -> CacheEntry:
        with self._lock:
            entry = self._cache[name]
            entry.pin_count += 1
            return entry

    def unpin(self, name: str) -> None:
        with self._lock:
            self._cache[name].pin_count -= 1

    def live_reservations(self, kind: Optional[str] = None) -> list:
        with self._lock:
            return [r for r in self._live.values() if kind is None or r.kind == kind]

    def reset_high_water(self) -> None:
        with self._lock:
            for r in self.regions.values():
                r.high_water = r.used

    def stats(self) -> dict:
        with self._lock:
            return {
                CACHING: self.caching.snapshot(),
                PROCESSING: self.processing.snapshot(),
                "cache": {
                    "entries": len(self._cache),
                    "bytes": sum(e.resident_bytes for e in self._cache.values()),
                },
                "exhaustion_events": self.exhaustion_events,
                "cache_full_events": self.cache_full_events,
            }
