"""Wall-clock attribution of kernel time to report categories.

Kernel invocations are recorded as (start, end, category) intervals. With
several workers the intervals overlap, so attribution walks the timeline:
each elementary segment is shared equally by the kernels active in it.
Exchange intervals count only where no kernel is running, and whatever is
left of the elapsed time is ``other``. The categories therefore sum to the
total by construction.
"""
from __future__ import annotations

import threading
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field

COMPUTE_CATEGORIES = ("join", "group_by", "filter", "aggregation", "order_by")
CATEGORIES = COMPUTE_CATEGORIES + ("exchange", "other")

clock = time.perf_counter


@dataclass
class ProfileReport:
    total: float
    categories: dict
    operators: dict = field(default_factory=dict)  # "kind#node" -> seconds (raw, may overlap)
    invocations: dict = field(default_factory=dict)  # category -> kernel call count

    @property
    def compute(self) -> float:
        return sum(self.categories[c] for c in COMPUTE_CATEGORIES)

    @property
    def exchange(self) -> float:
        return self.categories["exchange"]

    @property
    def other(self) -> float:
        return self.categories["other"]

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "compute": self.compute,
            "categories": dict(self.categories),
            "operators": dict(self.operators),
            "invocations": dict(self.invocations),
        }

    def format(self) -> str:
        lines = [f"total {self.total * 1e3:10.3f} ms"]
        for c in CATEGORIES:
            share = self.categories[c] / self.total * 100 if self.total > 0 else 0.0
            lines.append(f"  {c:<12}{self.categories[c] * 1e3:10.3f} ms {share:6.1f}%")
        return "\n".join(lines)


def attribute(intervals, start: float, end: float) -> dict:
    """Sweep-line attribution of ``intervals`` inside [start, end]."""
    events = []
    for s, e, cat in intervals:
        s, e = max(s, start), min(e, end)
        if e > s:
            events.append((s, 1, cat))
            events.append((e, -1, cat))
    events.sort(key=lambda x: (x[0], x[1]))
    out = dict.fromkeys(CATEGORIES, 0.0)
    active: dict = defaultdict(int)
    n_compute = 0
    n_exchange = 0
    prev = start
    for t, delta, cat in events:
        seg = t - prev
        if seg > 0:
            if n_compute:
                for c, k in active.items():
                    if k and c != "exchange":
                        out[c] += seg * k / n_compute
            elif n_exchange:
                out["exchange"] += seg
        prev = t
        active[cat] += delta
        if cat == "exchange":
            n_exchange += delta
        else:
            n_compute += delta
    total = end - start
    out["other"] = max(0.0, total - sum(out[c] for c in CATEGORIES if c != "other"))
    return out


class Profiler:
    def __init__(self):
        self._lock = threading.Lock()
        self.intervals: list = []
        self.operators: dict = defaultdict(float)
        self.invocations: dict = defaultdict(int)
        self.start = clock()
        self.end = None

    def restart(self) -> None:
        with self._lock:
            self.intervals.clear()
            self.operators.clear()
            self.invocations.clear()
            self.start = clock()
            self.end = None

    def record(self, category: str, start: float, end: float, operator: str = "") -> None:
        with self._lock:
            self.intervals.append((start, end, category))
            self.invocations[category] += 1
            if operator:
                self.operators[operator] += end - start

    @contextmanager
    def span(self, category: str, operator: str = ""):
        t0 = clock()
        try:
            yield
        finally:
            self.record(category, t0, clock(), operator)

    def stop(self) -> None:
        self.end = clock()

    def report(self) -> ProfileReport:
        end = self.end if self.end is not None else clock()
        with self._lock:
            intervals = list(self.intervals)
            ops = dict(self.operators)
            inv = dict(self.invocations)
        cats = attribute(intervals, self.start, end)
        return ProfileReport(end - self.start, cats, ops, inv)


class NullProfiler(Profiler):
    """Profiler that drops everything (used when nobody asked for timings)."""

    def record(self, category, start, end, operator=""):
        pass
