import subprocess
import sys
import textwrap
import threading
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from siriette.buffer_manager import PROCESSING, BufferManager
from siriette.columnar import Batch, concat_batches, serialize_batch
from siriette.dtypes import FLOAT64, INT64, STRING, Field, Schema
from siriette.errors import SequenceGap, TransportError, UnknownEntry
from siriette.exchange import (
    FLAG_EOS,
    ExchangeFrame,
    ExchangeService,
    LoopbackTransport,
    SocketTransport,
    decode_frame,
    merge_runs,
    partition_batch,
)
from siriette.plan_ir import SortKey

from helpers import random_batch
from test_kernels import scalar_key_hash

GOLDEN = Path(__file__).parent / "golden"
TYPES = [INT64, STRING, FLOAT64]
SCHEMA = Schema(tuple(Field(f"c{i}", t) for i, t in enumerate(TYPES)))


def rows_of(batches):
    return Counter(r for b in batches for r in b.to_rows())


def cluster(n, buffers=None):
    t = LoopbackTransport()
    return t, [ExchangeService(i, t, buffers) for i in range(n)]


# partition_batch

def test_partition_single_output():
    b = Batch.from_rows([INT64], [(1,), (2,)])
    [only] = partition_batch(b, [0], 1)
    assert only.to_rows() == b.to_rows()


def test_equal_keys_same_partition():
    b = Batch.from_rows([INT64, INT64], [(7, i) for i in range(20)] + [(i, i) for i in range(20)])
    parts = partition_batch(b, [0], 4)
    holding = [i for i, p in enumerate(parts) if any(r[0] == 7 for r in p.to_rows())]
    assert len(holding) == 1


def test_partition_matches_scalar_hash():
    b = random_batch(np.random.default_rng(21), TYPES, 10_000, 0.1)
    parts = partition_batch(b, [0, 1], 4)
    expected = [[] for _ in range(4)]
    for r in b.to_rows():
        expected[scalar_key_hash(r[:2], TYPES[:2]) % 4].append(r)
    assert [p.to_rows() for p in parts] == expected


@pytest.mark.parametrize("fanout", [1, 2, 4, 8])
def test_shuffle_conservation_and_determinism(fanout):
    rng = np.random.default_rng(fanout)
    for _ in range(100):
        b = random_batch(rng, TYPES, int(rng.integers(0, 200)), 0.3)
        parts = partition_batch(b, [1, 0], fanout)
        assert rows_of(parts) == rows_of([b])
        again = partition_batch(b, [1, 0], fanout)
        assert [p.to_rows() for p in parts] == [p.to_rows() for p in again]


# send patterns

def test_broadcast_two_batches_three_nodes():
    _, nodes = cluster(4)
    batches = [Batch.from_rows([INT64], [(1,), (2,)]), Batch.from_rows([INT64], [(3,)])]
    nodes[0].send(1, 5, "broadcast", batches, [1, 2, 3])
    for n in nodes[1:]:
        t = n.receive(1, 5, [0], Schema((Field("a", INT64),)))
        assert [b.to_rows() for b in t.batches] == [[(1,), (2,)], [(3,)]]


def test_broadcast_byte_equal_across_four_receivers():
    _, nodes = cluster(5)
    b = random_batch(np.random.default_rng(4), TYPES, 500, 0.3)
    nodes[4].send(1, 1, "broadcast", b.chunks(128), [0, 1, 2, 3])
    received = [n.registry.get(1, 1).runs()[0][1] for n in nodes[:4]]
    blobs = [b"".join(serialize_batch(x) for x in r) for r in received]
    assert len(set(blobs)) == 1


def test_multicast_subset():
    t, nodes = cluster(4)
    nodes[0].send(1, 2, "multicast", [Batch.from_rows([INT64], [(9,)])], [1, 3])
    assert [len(n.registry) for n in nodes] == [0, 1, 0, 1]
    assert {dst for _, dst, *_ in t.frame_log} == {1, 3}


def test_shuffle_counts_match_oracle(tpch):
    # Q3-shaped intermediate: orders rows keyed on orderkey
    orders = tpch["orders"]
    _, nodes = cluster(4)
    sent = {}
    for src in range(4):
        sl = orders.slice_rows(src * orders.num_rows // 4, (src + 1) * orders.num_rows // 4)
        sent[src] = nodes[src].send(9, 1, "shuffle", sl.batches, [0, 1, 2, 3], keys=[0])
    predicted = Counter(scalar_key_hash((r[0],), [INT64]) % 4 for r in orders.to_rows())
    for dst in range(4):
        got = nodes[dst].receive(9, 1, range(4), orders.schema).num_rows
        assert got == predicted[dst] == sum(s[dst] for s in sent.values())


def test_send_closes_every_stream_with_eos():
    t, nodes = cluster(3)
    nodes[0].send(3, 4, "shuffle", [Batch.from_rows([INT64], [(1,)])], [1, 2], keys=[0])
    eos = [(dst, seq) for src, dst, q, x, part, seq, flags in t.frame_log if flags & FLAG_EOS]
    assert sorted(d for d, _ in eos) == [1, 2]


# receive

def test_collect_single_batch():
    _, nodes = cluster(2)
    b = Batch.from_rows([INT64], [(4,), (5,)])
    nodes[0].send(1, 1, "merge", [b], [1])
    t = nodes[1].receive(1, 1, [0], Schema((Field("a", INT64),)))
    assert t.to_rows() == [(4,), (5,)]


def test_collect_order_is_producer_then_sequence():
    _, nodes = cluster(3)
    schema = Schema((Field("a", INT64),))
    nodes[2].send(1, 1, "broadcast", [Batch.from_rows([INT64], [(20,)]), Batch.from_rows([INT64], [(21,)])], [0])
    nodes[1].send(1, 1, "broadcast", [Batch.from_rows([INT64], [(10,)])], [0])
    assert nodes[0].receive(1, 1, [1, 2], schema).to_rows() == [(10,), (20,), (21,)]


def test_merge_two_streams():
    _, nodes = cluster(3)
    schema = Schema((Field("a", INT64),))
    nodes[1].send(1, 1, "merge", [Batch.from_rows([INT64], [(1,), (3,)])], [0])
    nodes[2].send(1, 1, "merge", [Batch.from_rows([INT64], [(2,), (4,)])], [0])
    t = nodes[0].receive(1, 1, [1, 2], schema, mode="merge", sort_keys=[SortKey(0)])
    assert t.to_rows() == [(1,), (2,), (3,), (4,)]


@given(st.integers(0, 2**32 - 1))
def test_merge_of_four_sorted_runs_equals_sort(seed):
    from siriette.kernels.sorting import sort

    rng = np.random.default_rng(seed)
    keys = [SortKey(1, False, bool(rng.integers(2))), SortKey(0, bool(rng.integers(2)), False)]
    runs = []
    for _ in range(4):
        b = random_batch(rng, TYPES, int(rng.integers(0, 60)), 0.3)
        runs.append(b.take(sort(b, keys)))
    allb = concat_batches(runs, TYPES)
    expected = allb.take(sort(allb, keys)).to_rows()
    assert merge_runs(runs, keys, TYPES).to_rows() == expected


def test_sequence_gap_detected():
    svc = ExchangeService(0, LoopbackTransport())
    b = Batch.from_rows([INT64], [(1,)])
    svc.on_frame(ExchangeFrame.data(1, 1, 5, 0, 0, b))
    svc.on_frame(ExchangeFrame.end(1, 1, 5, 0, 2))  # frame 1 never arrived
    with pytest.raises(SequenceGap):
        svc.receive(1, 1, [5], Schema((Field("a", INT64),)), timeout=1)


def test_receive_times_out():
    svc = ExchangeService(0, LoopbackTransport())
    with pytest.raises(TransportError):
        svc.receive(1, 1, [3], Schema((Field("a", INT64),)), timeout=0.05)


# registry lifecycle

def test_deregister_single_and_double_consumer():
    bm = BufferManager(0, 1 << 20)
    _, nodes = cluster(2, bm)
    b = Batch.from_rows([INT64], [(i,) for i in range(10)])
    nodes[0].send(1, 1, "broadcast", [b], [1])
    assert bm.processing.used > 0
    nodes[1].deregister(1, 1)
    assert len(nodes[1].registry) == 0
    assert bm.processing.used == 0
    with pytest.raises(UnknownEntry):
        nodes[1].deregister(1, 1)

    nodes[1].registry.open(2, 1, consumers=2)
    nodes[0].send(2, 1, "broadcast", [b], [1])
    nodes[1].deregister(2, 1)
    assert nodes[1].registry.keys() == [(2, 1)]
    nodes[1].deregister(2, 1)
    assert len(nodes[1].registry) == 0
    assert bm.stats()[PROCESSING]["used"] == 0


# wire format

GOLDEN_FRAMES = {
    "frame_empty.bin": ExchangeFrame.data(1, 0, 0, 0, 0, Batch.empty([INT64])),
    "frame_int64_nulls.bin": ExchangeFrame.data(7, 2, 1, 0, 0, Batch.from_rows([INT64], [(1,), (None,), (3,)])),
    "frame_string.bin": ExchangeFrame.data(7, 3, 2, 1, 5, Batch.from_rows([STRING], [("ab",), ("",), (None,), ("ü",)])),
}


@pytest.mark.parametrize("name", sorted(GOLDEN_FRAMES))
def test_golden_frames(name):
    golden = (GOLDEN / name).read_bytes()
    frame = GOLDEN_FRAMES[name]
    assert frame.encode() == golden
    back = decode_frame(golden)
    assert back == frame
    assert back.batch().equals(frame.batch())


def test_eos_frame_has_no_payload():
    f = ExchangeFrame.end(1, 2, 3, 4, 5)
    assert len(f.encode()) == 36
    assert decode_frame(f.encode()).eos


def test_corrupt_frames_rejected():
    data = GOLDEN_FRAMES["frame_int64_nulls.bin"].encode()
    with pytest.raises(TransportError):
        decode_frame(b"XXXX" + data[4:])
    with pytest.raises(TransportError):
        decode_frame(data[:-1])


SENDER = textwrap.dedent("""
    import sys
    import numpy as np
    sys.path.insert(0, sys.argv[2])
    from siriette.exchange import ExchangeService, SocketTransport
    from helpers import random_batch
    from test_exchange import TYPES
    port = int(sys.argv[1])
    t = SocketTransport(1, peers={0: ("127.0.0.1", port)})
    svc = ExchangeService(1, t)
    b = random_batch(np.random.default_rng(5), TYPES, 3000, 0.3)
    svc.send(1, 7, "shuffle", b.chunks(500), [0, 0, 0], keys=[0])
    svc.send(1, 8, "broadcast", [b.slice(0, 10)], [0])
    t.close()
""")


def _send_workload(svc):
    b = random_batch(np.random.default_rng(5), TYPES, 3000, 0.3)
    svc.send(1, 7, "shuffle", b.chunks(500), [0, 0, 0], keys=[0])
    svc.send(1, 8, "broadcast", [b.slice(0, 10)], [0])


def test_loopback_and_cross_process_socket_registries_match():
    loop = LoopbackTransport()
    recv_a = ExchangeService(0, loop)
    _send_workload(ExchangeService(1, loop))

    sock = SocketTransport(0)
    recv_b = ExchangeService(0, sock)
    try:
        here = Path(__file__).parent
        subprocess.run([sys.executable, "-c", SENDER, str(sock.address[1]), str(here)],
                       check=True, timeout=60, cwd=here)
        for xid in (7, 8):
            recv_b.receive(1, xid, [1], SCHEMA, timeout=10)
    finally:
        sock.close()
    assert recv_a.registry.snapshot() == recv_b.registry.snapshot()


def test_socket_in_process_concurrent_producers():
    transports = [SocketTransport(i) for i in range(3)]
    peers = {i: t.address for i, t in enumerate(transports)}
    for t in transports:
        t.peers.update(peers)
    nodes = [ExchangeService(i, t) for i, t in enumerate(transports)]
    try:
        b = random_batch(np.random.default_rng(8), TYPES, 2000, 0.2)
        threads = [threading.Thread(target=n.send, args=(1, 1, "shuffle", b.chunks(100), [0, 1, 2], [0]))
                   for n in nodes]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        got = [n.receive(1, 1, [0, 1, 2], SCHEMA, timeout=10) for n in nodes]
        assert sum(t.num_rows for t in got) == 3 * 2000
        assert rows_of([x for t in got for x in t.batches]) == rows_of([b, b, b])
    finally:
        for t in transports:
            t.close()
