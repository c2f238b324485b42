"""Streaming limit."""
from __future__ import annotations

from typing import Iterable, Iterator

from ..columnar import Batch


def limit(batches: Iterable[Batch], n: int) -> Iterator[Batch]:
    """First ``n`` rows of the stream in arrival order."""
    remaining = n
    for b in batches:
        if remaining <= 0:
            return
        if b.row_count <= remaining:
            remaining -= b.row_count
            yield b
        else:
            yield b.slice(0, remaining)
            remaining = 0
