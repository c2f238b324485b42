import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from siriette import Engine, queries, run_with_fallback
from siriette.buffer_manager import CACHING, PROCESSING, BufferManager
from siriette.columnar import Batch, Column, Table
from siriette.config import EngineConfig
from siriette.dtypes import INT64, Field, Schema
from siriette.errors import CacheFull, ProcessingExhausted

MiB = 1 << 20


def int_table(name, n):
    b = Batch([Column.from_numpy(INT64, np.arange(n, dtype=np.int64))], n)
    return Table.from_batch(name, Schema((Field("a", INT64),)), b, n or 1)


def test_split_default_halves():
    bm = BufferManager.split(1 << 30)
    assert bm.caching.capacity == 512 * MiB
    assert bm.processing.capacity == 512 * MiB


def test_zero_cache_rejects_tables():
    bm = BufferManager(0, MiB)
    with pytest.raises(CacheFull):
        bm.cache_table(int_table("t", 10))
    with pytest.raises(CacheFull):
        bm.cache_table(int_table("e", 0))


def test_fresh_stats_are_zero():
    s = BufferManager(MiB, MiB).stats()
    assert s[PROCESSING]["used"] == 0 and s[PROCESSING]["high_water"] == 0
    assert s[CACHING]["used"] == 0
    assert s["cache"] == {"entries": 0, "bytes": 0}
    assert s["exhaustion_events"] == 0


def test_cache_100_mib_table():
    bm = BufferManager.split(1 << 30)
    t = int_table("big", 100 * MiB // 8)
    entry = bm.cache_table(t)
    assert entry.resident_bytes == sum(b.nbytes for b in t.batches) == 100 * MiB
    assert bm.stats()[CACHING]["used"] == 100 * MiB


def test_cache_twice_is_noop():
    bm = BufferManager(MiB, MiB)
    t = int_table("t", 100)
    first = bm.cache_table(t)
    assert bm.cache_table(t) is first
    assert bm.caching.used == 800
    assert bm.ingested_bytes == 800


def test_cache_too_large():
    bm = BufferManager(100, MiB)
    with pytest.raises(CacheFull):
        bm.cache_table(int_table("t", 100))
    assert bm.caching.used == 0


def test_reserve_release_cycle():
    bm = BufferManager(0, 1000)
    r = bm.reserve(PROCESSING, 600, "a")
    assert bm.processing.used == 600
    with pytest.raises(ProcessingExhausted):
        bm.reserve(PROCESSING, 600, "b")
    r.release()
    with pytest.raises(RuntimeError):
        r.release()
    bm.reserve(PROCESSING, 600, "c").release()
    assert bm.processing.used == 0
    assert bm.exhaustion_events == 1


def test_high_water_after_release():
    bm = BufferManager(0, 128 * MiB)
    bm.reserve(PROCESSING, 64 * MiB).release()
    s = bm.stats()[PROCESSING]
    assert s["used"] == 0 and s["high_water"] == 64 * MiB


def test_concurrent_pair_exactly_one_fails():
    for _ in range(200):
        bm = BufferManager(0, 150)
        barrier = threading.Barrier(2)
        outcomes = []

        def go():
            barrier.wait()
            try:
                outcomes.append(bm.reserve(PROCESSING, 100))
            except ProcessingExhausted:
                outcomes.append(None)

        threads = [threading.Thread(target=go) for _ in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sum(o is None for o in outcomes) == 1
        assert bm.processing.used == 100


@given(st.lists(st.integers(1, 400), min_size=1, max_size=40), st.integers(1, 8))
def test_capacity_never_exceeded_under_stress(sizes, threads):
    bm = BufferManager(0, 1000)
    peak = []

    def worker(chunk):
        for n in chunk:
            try:
                r = bm.reserve(PROCESSING, n)
            except ProcessingExhausted:
                continue
            peak.append(bm.processing.used)
            r.release()

    ts = [threading.Thread(target=worker, args=(sizes[i::threads],)) for i in range(threads)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert bm.processing.used == 0
    assert bm.processing.high_water <= 1000
    assert all(p <= 1000 for p in peak)


def test_aborted_query_counts_exhaustion(tpch):
    e = Engine(EngineConfig(caching_bytes=64 * MiB, processing_bytes=MiB))
    for t in tpch.values():
        e.load_table(t)
    before = e.buffers.stats()[PROCESSING]["used"]
    with pytest.raises(ProcessingExhausted):
        e.run_native(queries.load("q3"))
    assert e.buffers.stats()["exhaustion_events"] >= 1
    assert e.buffers.stats()[PROCESSING]["used"] == before


def test_processing_returns_to_baseline(tpch_engine):
    bm = tpch_engine.buffers
    for name in queries.names():
        base = bm.stats()[PROCESSING]["used"]
        run_with_fallback(tpch_engine, queries.load(name), workers=4)
        assert bm.stats()[PROCESSING]["used"] == base, name
        assert bm.live_reservations(PROCESSING) == []


def test_hot_run_does_no_ingestion(tpch_engine):
    d = queries.load("q6")
    count, cached = tpch_engine.ingest_count, tpch_engine.buffers.ingested_bytes
    first, _ = tpch_engine.run_native(d)
    second, _ = tpch_engine.run_native(d)
    assert first.to_rows() == second.to_rows()
    assert tpch_engine.ingest_count == count
    assert tpch_engine.buffers.ingested_bytes == cached
