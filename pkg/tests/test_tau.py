"""Barrier-based primary-order broadcast, both barrier flavours."""

import pytest

from poabcast.broadcast import NotPrimaryError
from poabcast.checker import check_all
from poabcast.cli import load_scenario
from poabcast.runner import run
from poabcast.sim import DelayModel, OmegaScript, Simulator
from poabcast.tau import TOP, TauBroadcast
from poabcast.values import AppValue


class Host:
    def __init__(self, sim, pid, n, mode):
        self.layer = TauBroadcast(sim, pid, n, mode=mode)

    def on_message(self, frm, msg):
        self.layer.on_message(frm, msg)

    def on_omega(self, leader):
        self.layer.on_omega(leader)


def make_cluster(mode, omega=None, n=3, delta=10):
    sim = Simulator(
        n=n, delay_model=DelayModel.fixed(delta), omega=omega or OmegaScript.single(n, 0)
    )
    hosts = [Host(sim, p, n, mode) for p in range(n)]
    for p, h in enumerate(hosts):
        sim.add_actor(p, h)
    return sim, hosts


def test_fresh_seq_leader_is_primary_immediately():
    sim, hosts = make_cluster("seq")
    layer = hosts[0].layer
    layer.on_omega(0)
    assert layer.tau() == 0 and layer.dec == 0
    assert layer.is_primary()


def test_seq_broadcast_raises_the_barrier_until_decided():
    sim, hosts = make_cluster("seq")
    layer = hosts[0].layer
    layer.on_omega(0)
    layer.poabcast(AppValue("v"))
    assert layer.prop == 1 and layer.dec == 0
    assert layer.tau() == 1
    assert not layer.is_primary()  # primary flickers off per broadcast
    sim.run(200)
    assert layer.dec >= 1
    assert layer.is_primary()


def test_non_leader_cannot_broadcast():
    sim, hosts = make_cluster("seq")
    with pytest.raises(NotPrimaryError):
        hosts[1].layer.poabcast(AppValue("v"))


def test_paxos_barrier_is_top_outside_the_write_phase():
    sim, hosts = make_cluster("paxos")
    layer = hosts[0].layer
    assert layer.tau() == TOP  # idle, not leading
    layer.on_omega(0)  # starts the read phase
    assert layer.tau() == TOP
    assert not layer.is_primary()
    sim.run(200)
    assert layer.tau() != TOP
    assert layer.is_primary()


def test_election_with_gap_proposes_skips():
    sim, hosts = make_cluster("seq", omega=OmegaScript.single(3, 2))
    layer = hosts[2].layer
    layer.dec = 2
    layer.paxos.advance_to(2)  # consensus agrees: instances 1-2 are settled
    layer.prop = 5  # pretend earlier broadcasts are still undecided
    layer.on_omega(2)
    skips = sim.trace.by_kind("skip-proposed")
    assert [(e.data["lo"], e.data["target"]) for e in skips] == [(3, 5)]
    sim.run(400)
    assert layer.dec >= 5
    assert layer.is_primary()


def test_no_gap_means_no_skips():
    sim, hosts = make_cluster("seq")
    hosts[0].layer.on_omega(0)
    assert sim.trace.by_kind("skip-proposed") == []


def test_deciding_skip_fast_forwards_and_drops_gap_values():
    from poabcast.values import Skip

    sim, hosts = make_cluster("seq")
    layer = hosts[1].layer
    layer.on_decide(Skip(5), 3)
    assert layer.dec == 5
    # instances 4 and 5 were consumed by the skip: the paxos stream will not
    # hand them to the layer again
    assert layer.paxos._next_decide >= 6


@pytest.mark.parametrize("mode", ["seq", "paxos"])
def test_stable_run_passes_all_checks(mode):
    scenario = load_scenario(f"stable-tau-{mode}")
    trace = run(scenario)
    report = check_all(trace)
    assert report.violations == {}
    assert report.liveness == "pass"
    assert report.linearizable is True


@pytest.mark.parametrize("mode", ["seq", "paxos"])
def test_leader_change_run_passes_all_checks(mode):
    scenario = load_scenario(f"leaderchange-tau-{mode}")
    trace = run(scenario)
    report = check_all(trace)
    assert report.violations == {}


def test_demoted_leader_ends_its_epoch():
    omega = OmegaScript(
        [(0, {p: 0 for p in range(3)}), (100, {p: 1 for p in range(3)})]
    )
    sim, hosts = make_cluster("seq", omega=omega)
    trace = sim.run(600)
    ends = [e for e in trace.by_kind("primary-end") if e.actor == 0]
    assert any(e.time >= 100 for e in ends)
    begins = [e for e in trace.by_kind("primary-begin") if e.actor == 1]
    assert any(e.time >= 100 for e in begins)
