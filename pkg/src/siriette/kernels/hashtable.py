"""Open-addressing (linear probing) hash table over uint64 key hashes.

Insertion and lookup are vectorized: every round resolves all rows whose
probe position is decided and advances the rest by one slot.
"""
from __future__ import annotations

import numpy as np

MAX_LOAD = 0.7


def capacity_for(n: int) -> int:
    cap = 8
    while cap * MAX_LOAD < n:
        cap <<= 1
    return cap


class HashIndex:
    """Maps a distinct hash to a dense entry number (0, 1, 2, ...)."""

    def __init__(self, expected: int):
        self.capacity = capacity_for(expected)
        self.mask = np.uint64(self.capacity - 1)
        self.used = np.zeros(self.capacity, dtype=bool)
        self.keys = np.zeros(self.capacity, dtype=np.uint64)
        self.entries = np.full(self.capacity, -1, dtype=np.int64)
        self.size = 0

    @property
    def load_factor(self) -> float:
        return self.size / self.capacity

    @property
    def nbytes(self) -> int:
        return self.capacity * (1 + 8 + 8)

    def insert(self, h: np.ndarray) -> np.ndarray:
        """Insert hashes (duplicates allowed); return each row's entry number.

        New entries are numbered in the order their slots are claimed.
        """
        n = len(h)
        out = np.full(n, -1, dtype=np.int64)
        if n == 0:
            return out
        pos = (h & self.mask).astype(np.int64)
        pending = np.arange(n)
        while pending.size:
            p = pos[pending]
            hp = h[pending]
            occupied = self.used[p]
            hit = occupied & (self.keys[p] == hp)
            out[pending[hit]] = self.entries[p[hit]]
            free = ~occupied
            if free.any():
                cand = pending[free]
                cpos = p[free]
                slots, first = np.unique(cpos, return_index=True)
                winners = cand[first]
                if self.size + len(winners) > self.capacity * MAX_LOAD:
                    raise ValueError("hash index sized too small for its keys")
                new_ids = np.arange(self.size, self.size + len(winners), dtype=np.int64)
                self.size += len(winners)
                self.used[slots] = True
                self.keys[slots] = h[winners]
                self.entries[slots] = new_ids
                # candidates that share the winner's hash join its entry
                same = self.keys[cpos] == h[cand]
                out[cand[same]] = self.entries[cpos[same]]
            pending = pending[out[pending] < 0]
            pos[pending] = (pos[pending] + 1) & int(self.mask)
        return out

    def lookup(self, h: np.ndarray) -> np.ndarray:
        """Entry number per hash, -1 where absent."""
        n = len(h)
        out = np.full(n, -1, dtype=np.int64)
        if n == 0 or self.size == 0:
            return out
        pos = (h & self.mask).astype(np.int64)
        active = np.arange(n)
        while active.size:
            p = pos[active]
            occupied = self.used[p]
            hit = occupied & (self.keys[p] == h[active])
            out[active[hit]] = self.entries[p[hit]]
            active = active[occupied & ~hit]
            pos[active] = (pos[active] + 1) & int(self.mask)
        return out
