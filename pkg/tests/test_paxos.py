"""Consensus core: ballots, read/write phases, decide stream, whitebox gate."""

import pytest

from poabcast.paxos import (
    DecideMsg,
    PaxosNode,
    ReadAck,
    ReadMsg,
    WhiteboxDisabledError,
    WriteAck,
    WriteMsg,
    WRITING,
    READING,
)
from poabcast.sim import DelayModel, OmegaScript, Simulator
from poabcast.values import NOOP, AppValue


class Node:
    """PaxosNode wired into the simulator as an actor."""

    def __init__(self, sim, pid, n, **kw):
        self.delivered = []
        self.node = PaxosNode(
            sim, pid, n, deliver=lambda v, i: self.delivered.append((i, v)), **kw
        )

    def on_message(self, frm, msg):
        self.node.on_message(frm, msg)


def make_cluster(n=3, delta=10, **kw):
    sim = Simulator(n=n, delay_model=DelayModel.fixed(delta), omega=OmegaScript.single(n, 0))
    nodes = [Node(sim, p, n, **kw) for p in range(n)]
    for p, nd in enumerate(nodes):
        sim.add_actor(p, nd)
    return sim, nodes


def test_quorum_is_a_majority():
    sim, nodes = make_cluster(n=3)
    assert nodes[0].node.quorum == 2
    sim5, nodes5 = make_cluster(n=5)
    assert nodes5[0].node.quorum == 3


def test_ballots_strictly_increase_and_encode_the_process():
    sim, nodes = make_cluster()
    leader = nodes[1].node
    leader.begin_read_phase()
    first = leader.ballot
    assert first % 3 == 1
    leader.begin_read_phase()
    assert leader.ballot > first
    assert leader.ballot % 3 == 1


def test_new_leader_ballot_beats_every_ballot_it_has_seen():
    sim, nodes = make_cluster()
    node = nodes[2].node
    node.on_message(0, ReadMsg(ballot=3 * 3 + 0, lo=1))  # round 3 from process 0
    node.begin_read_phase()
    assert node.ballot // 3 == 4  # picks round 4


def test_read_ack_picks_highest_ballot_per_instance():
    sim, nodes = make_cluster()
    leader = nodes[0].node
    leader.begin_read_phase()
    b = leader.ballot
    v1, v2 = AppValue("v1"), AppValue("v2")
    leader._on_read_ack(0, ReadAck(b, ((7, (v1, 2)),)))
    leader._on_read_ack(1, ReadAck(b, ((7, (v2, 5)),)))
    assert leader.picked[7] == (v2, 5)


def test_read_ack_gaps_fill_with_noops_and_set_watermark():
    sim, nodes = make_cluster()
    leader = nodes[0].node
    leader.begin_read_phase()
    b = leader.ballot
    v = AppValue("v")
    leader._on_read_ack(0, ReadAck(b, ((1, (v, 1)), (2, (v, 1)), (4, (v, 1)))))
    leader._on_read_ack(1, ReadAck(b, ()))
    assert leader.watermark == 4
    assert leader.picked[3] == (NOOP, 0)
    assert leader.phase == WRITING


def test_empty_read_acks_leave_watermark_zero():
    sim, nodes = make_cluster()
    leader = nodes[0].node
    leader.begin_read_phase()
    b = leader.ballot
    leader._on_read_ack(0, ReadAck(b, ()))
    leader._on_read_ack(1, ReadAck(b, ()))
    assert leader.watermark == 0
    assert leader.picked == {}


def test_acceptor_rejects_writes_below_its_promise():
    sim, nodes = make_cluster()
    acceptor = nodes[1].node
    acceptor.on_message(0, ReadMsg(ballot=9, lo=1))
    assert acceptor.promised == 9
    acceptor.on_message(0, WriteMsg(ballot=7, instance=1, value=AppValue("v")))
    assert 1 not in acceptor.accepted
    acceptor.on_message(0, WriteMsg(ballot=9, instance=1, value=AppValue("v")))
    assert acceptor.accepted[1][0] == AppValue("v")


def test_majority_write_decides_at_every_correct_process():
    sim, nodes = make_cluster()
    v = AppValue("v")
    nodes[0].node.ensure_leadership()
    nodes[0].node.propose(v, 1)
    sim.run(500)
    for nd in nodes:
        assert nd.delivered == [(1, v)]


def test_decide_stream_reorders_into_gap_free_sequence():
    sim, nodes = make_cluster()
    learner = nodes[2]
    v1, v2 = AppValue("v1"), AppValue("v2")
    learner.node.on_message(0, DecideMsg(2, v2))
    assert learner.delivered == []  # instance 1 still missing
    learner.node.on_message(0, DecideMsg(1, v1))
    assert learner.delivered == [(1, v1), (2, v2)]


def test_undecided_instance_never_appears_in_the_stream():
    sim, nodes = make_cluster()
    nodes[0].node.ensure_leadership()
    nodes[0].node.propose(AppValue("v"), 1)
    sim.run(500)
    assert all(i != 5 for nd in nodes for i, _ in nd.delivered)


def test_sequential_mode_holds_back_later_instances():
    sim, nodes = make_cluster(sequential=True)
    leader = nodes[0].node
    leader.ensure_leadership()
    v1, v2 = AppValue("v1"), AppValue("v2")

    sim.schedule(40, lambda: (leader.propose(v1, 1), leader.propose(v2, 2)))
    trace = sim.run(1000)
    writes = [
        (e.time, e.data["instance"])
        for e in trace.by_kind("paxos-write")
        if e.actor == 0 and e.data["app"]
    ]
    t1 = min(t for t, i in writes if i == 1)
    t2 = min(t for t, i in writes if i == 2)
    decide1 = min(
        e.time for e in trace.by_kind("decide") if e.actor == 0 and e.data["instance"] == 1
    )
    assert t2 >= decide1 > t1
    assert nodes[1].delivered == [(1, v1), (2, v2)]


def test_whitebox_surface_is_feature_gated():
    sim, nodes = make_cluster()
    with pytest.raises(WhiteboxDisabledError):
        nodes[0].node.whitebox_observe()
    sim2, nodes2 = make_cluster(whitebox=True)
    assert nodes2[0].node.whitebox_observe() == ("idle", 0)
    nodes2[0].node.begin_read_phase()
    assert nodes2[0].node.whitebox_observe()[0] == READING


def test_conflicting_queued_proposal_rejected():
    sim, nodes = make_cluster()
    leader = nodes[0].node
    leader.propose(AppValue("v1"), 1)
    with pytest.raises(ValueError):
        leader.propose(AppValue("v2"), 1)


def test_transport_reassembles_reordered_messages():
    sim, nodes = make_cluster()
    from poabcast.paxos import Ordered

    node = nodes[1].node
    v = AppValue("v")
    # instance-7 write arrives before instance-6: reassembly must hold it back
    node.on_message(0, Ordered(1, WriteMsg(ballot=3, instance=7, value=v)))
    assert node.accepted == {}
    node.on_message(0, Ordered(0, WriteMsg(ballot=3, instance=6, value=v)))
    assert sorted(node.accepted) == [6, 7]


def test_reordered_network_preserves_local_primary_order():
    """Regression: a promise landing between an old primary's two writes must
    not let the second value be delivered without the first."""
    from poabcast import random_scenario, run
    from poabcast.checker import check_all

    trace = run(random_scenario(531, "tau-paxos"))
    report = check_all(trace, linearizability=False)
    assert report.violations == {}


def test_two_racing_leaders_decide_one_value_per_instance():
    from poabcast.checker import check_consensus

    n = 3
    sim = Simulator(
        n=n,
        delay_model=DelayModel.fixed(10),
        omega=OmegaScript(
            [(0, {0: 0, 1: 1, 2: 2}), (200, {p: 1 for p in range(n)})]
        ),
    )
    nodes = [Node(sim, p, n) for p in range(n)]
    for p, nd in enumerate(nodes):
        sim.add_actor(p, nd)
    nodes[0].node.ensure_leadership()
    nodes[1].node.ensure_leadership()
    sim.schedule(5, lambda: nodes[0].node.propose(AppValue("a"), 1))
    sim.schedule(5, lambda: nodes[1].node.propose(AppValue("b"), 1))
    trace = sim.run(2000)
    assert check_consensus(trace) is None
    decided = {nd.delivered[0] for nd in nodes if nd.delivered}
    assert len(decided) == 1
