import threading
import time

import pytest

from siriette import Engine, queries
from siriette.coordinator import LocalCluster, Membership
from siriette.coordinator.daemon import NodeDaemon, RemoteCluster
from siriette.coordinator.membership import ALIVE, DEAD, SUSPECT, HeartbeatMonitor
from siriette.coordinator.node import RESULT_EXCHANGE
from siriette.errors import NoAliveNodes, NodeLost
from siriette.testing import first_difference

DIST = ["q1_dist", "q3_dist", "q6_dist", "shuffle_join"]


class FakeClock:
    def __init__(self):
        self.now = 0.0

    def __call__(self):
        return self.now


def single_node(tpch, name):
    e = Engine()
    for t in tpch.values():
        e.load_table(t)
    return e.run_native(queries.load(name))[0]


def make_cluster(tpch, n, **kw):
    c = LocalCluster(n, **kw)
    for t in tpch.values():
        c.load_table(t)
    return c


# membership

def test_membership_transitions():
    clock = FakeClock()
    m = Membership(timeout=3.0, clock=clock)
    for i in range(3):
        m.join(i)
    assert set(m.refresh().values()) == {ALIVE}
    clock.now = 2.0
    m.beat(0)
    m.beat(1)
    assert m.status(2) == SUSPECT
    clock.now = 3.5
    m.beat(0)
    m.beat(1)
    assert m.status(2) == DEAD
    assert m.alive() == [0, 1]
    m.beat(2)  # rejoin between queries
    assert m.alive() == [0, 1, 2]


def test_heartbeat_monitor_marks_silent_node_dead():
    clock = FakeClock()
    m = Membership(timeout=1.0, clock=clock)
    for i in range(3):
        m.join(i)
    silent = {1}
    mon = HeartbeatMonitor(m, lambda i: i not in silent, interval=0.1)
    for _ in range(15):
        clock.now += 0.1
        mon.tick()
    assert m.refresh() == {0: ALIVE, 1: DEAD, 2: ALIVE}
    with pytest.raises(ValueError):
        HeartbeatMonitor(m, lambda i: True, interval=2.0)


def test_no_alive_nodes(tpch_small):
    clock = FakeClock()
    with make_cluster(tpch_small, 2, clock=clock, heartbeat_timeout=1.0) as c:
        clock.now = 5.0
        with pytest.raises(NoAliveNodes):
            c.dispatch(queries.load("q6"))


# dispatch and collect

def test_one_node_sends_no_frames(tpch_small):
    with make_cluster(tpch_small, 1) as c:
        t, q = c.run(queries.load("q6"))
        assert c.frame_log() == []
        assert [k for k in c.dispatch_log] == [(q.query_id, 0, 0)]


@pytest.mark.parametrize("name", ["q1", "q3", "q6"])
def test_one_node_cluster_byte_identical(tpch, name):
    expected = single_node(tpch, name)
    with make_cluster(tpch, 1) as c:
        t, _ = c.run(queries.load(name))
    assert t.to_rows() == expected.to_rows()


@pytest.mark.parametrize("n", [1, 2, 4])
@pytest.mark.parametrize("name", DIST)
def test_distributed_equals_single_node(tpch, n, name):
    base = name.replace("_dist", "")
    expected = single_node(tpch, base if base in queries.names() else name)
    with make_cluster(tpch, n) as c:
        t, _ = c.run(queries.load(name), workers=2)
    ordered = name in ("q1_dist", "q3_dist")
    assert first_difference(t.to_rows(), expected.to_rows(), ordered=ordered) is None


def test_socket_transport_cluster(tpch_small):
    expected = single_node(tpch_small, "q3_dist")
    with make_cluster(tpch_small, 3, transport="socket") as c:
        t, _ = c.run(queries.load("q3_dist"), workers=2)
    assert first_difference(t.to_rows(), expected.to_rows(), ordered=True) is None


def test_shuffle_join_fragments_on_four_nodes(tpch_small):
    with make_cluster(tpch_small, 4) as c:
        t, q = c.run(queries.load("shuffle_join"))
        assert len(q.fragments) == 3
        assert {(f, n) for _, f, n in c.dispatch_log if _ == q.query_id} == {(f, n) for f in range(3) for n in range(4)}
        shuffles = [x for x, e in q.fragments.edges.items() if e.pattern == "shuffle"]
        assert len(shuffles) == 2
        active = {entry[3] for entry in c.frame_log() if entry[2] == q.query_id}
        assert set(shuffles) <= active
    assert t.num_rows > 0


def test_results_reach_coordinator(tpch_small):
    with make_cluster(tpch_small, 2) as c:
        _, plain = c.run(queries.load("shuffle_join"))
        _, merged = c.run(queries.load("q1_dist"))
        inbound = lambda q: {x for src, dst, qid, x, *_ in c.frame_log() if qid == q.query_id and dst == 0 and src != 0}  # noqa: E731
        # no exchange at the root: the root fragment streams to the reserved result id
        assert plain.fragments.result_exchange is None
        assert RESULT_EXCHANGE in inbound(plain)
        # a root merge exchange delivers on its own id
        assert merged.fragments.result_exchange.id in inbound(merged)
        assert RESULT_EXCHANGE not in inbound(merged)


def test_registries_empty_after_query(tpch_small):
    with make_cluster(tpch_small, 3) as c:
        baseline = {i: n.engine.buffers.processing.used for i, n in c.nodes.items()}
        c.run(queries.load("q3_dist"))
        for i, n in c.nodes.items():
            assert len(n.service.registry) == 0
            assert n.engine.buffers.processing.used == baseline[i]


# failures

def test_node_death_mid_query(tpch_small):
    with make_cluster(tpch_small, 4) as c:
        c.nodes[2].fragment_delay = 5.0
        q = c.dispatch(queries.load("q3_dist"))
        threading.Timer(0.1, c.kill, args=(2,)).start()
        with pytest.raises(NodeLost):
            c.collect(q)


def test_dead_node_gets_no_frames(tpch):
    clock = FakeClock()
    with make_cluster(tpch, 4, clock=clock, heartbeat_timeout=1.0) as c:
        c.kill(3)
        clock.now = 2.0
        c.heartbeat()
        assert c.membership.alive() == [0, 1, 2]
        t, q = c.run(queries.load("q3_dist"))
        assert all(n != 3 for qid, _, n in c.dispatch_log if qid == q.query_id)
        assert all(dst != 3 for _, dst, qid, *_ in c.frame_log() if qid == q.query_id)
    assert first_difference(t.to_rows(), single_node(tpch, "q3_dist").to_rows(), ordered=True) is None


def test_restart_and_rejoin(tpch_small):
    clock = FakeClock()
    with make_cluster(tpch_small, 3, clock=clock, heartbeat_timeout=1.0) as c:
        c.kill(1)
        clock.now = 2.0
        c.heartbeat()
        c.restart(1)
        clock.now = 2.5
        c.heartbeat()
        assert c.membership.alive() == [0, 1, 2]
        t, _ = c.run(queries.load("q1_dist"))
    assert first_difference(t.to_rows(), single_node(tpch_small, "q1").to_rows(), ordered=True) is None


# timing

def test_timing_report_accounts(tpch_small):
    with make_cluster(tpch_small, 4) as c:
        _, q = c.run(queries.load("shuffle_join"))
        r = c.timing_report(q)
    assert r.compute >= 0 and r.exchange > 0 and r.other >= 0
    assert abs(r.compute + r.exchange + r.other - r.total) < 1e-6


def test_single_node_run_has_no_exchange_time(tpch_small):
    e = Engine()
    for t in tpch_small.values():
        e.load_table(t)
    _, r = e.run_native(queries.load("q6"), profile=True)
    assert r.exchange == 0


# daemons

def test_remote_cluster_with_daemons(tpch_small):
    daemons = []
    with RemoteCluster(timeout=60) as c:
        for i in range(3):
            d = NodeDaemon(i, coordinator=c.address)
            d.announce()
            daemons.append(d)
        try:
            c.wait_for_nodes(3, timeout=5)
            for t in tpch_small.values():
                c.load_table(t)
            for name in ("q6_dist", "q3_dist"):
                got, q = c.run(queries.load(name))
                expected = single_node(tpch_small, name)
                assert first_difference(got.to_rows(), expected.to_rows(), ordered=True) is None
                assert set(c.node_reports[q.query_id]) == {0, 1, 2}
        finally:
            for d in daemons:
                d.stop()


def test_remote_node_loss(tpch_small):
    with RemoteCluster(timeout=20) as c:
        daemons = [NodeDaemon(i) for i in range(2)]
        for d in daemons:
            c.add_node(d.address)
        for t in tpch_small.values():
            c.load_table(t)
        daemons[1].stop()
        time.sleep(0.05)
        with pytest.raises(NodeLost):
            c.run(queries.load("q3_dist"))
        daemons[0].stop()
