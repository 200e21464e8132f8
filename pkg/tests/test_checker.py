"""Checker soundness: every property catches its hand-built counterexample."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poabcast.checker import (
    AmbiguousMappingError,
    HistoryOp,
    OversizedHistoryError,
    check_abcast,
    check_all,
    check_barrier,
    check_barrier_free,
    check_linearizable,
    check_sequentiality,
    collect_epochs,
    derive_primary_mapping,
    extract_history,
    _chain,
)
from poabcast.replication import INITIAL_STATE
from poabcast.trace import Trace, TraceEvent


def make_trace(rows):
    """rows: (time, actor, kind, data) with auto-assigned global indices."""
    trace = Trace()
    for i, (t, actor, kind, data) in enumerate(rows):
        trace.append(TraceEvent(t, i, actor, kind, data))
    return trace


# -- atomic broadcast ---------------------------------------------------------


def test_empty_trace_passes_abcast():
    assert check_abcast(make_trace([])).violations == {}


def test_integrity_catches_delivery_of_unbroadcast_value():
    trace = make_trace([(1, 0, "deliver", {"value": "ghost", "instance": 1})])
    assert "integrity" in check_abcast(trace).violations


def test_integrity_catches_duplicate_delivery():
    trace = make_trace(
        [
            (0, 0, "broadcast", {"value": "v", "instance": 1}),
            (1, 0, "deliver", {"value": "v", "instance": 1}),
            (2, 0, "deliver", {"value": "v", "instance": 1}),
        ]
    )
    assert "delivered v twice" in check_abcast(trace).violations["integrity"]


def test_total_order_catches_swapped_deliveries():
    trace = make_trace(
        [
            (0, 0, "broadcast", {"value": "v1", "instance": 1}),
            (0, 0, "broadcast", {"value": "v2", "instance": 2}),
            (1, 0, "deliver", {"value": "v1", "instance": 1}),
            (2, 0, "deliver", {"value": "v2", "instance": 2}),
            (1, 1, "deliver", {"value": "v2", "instance": 2}),
            (2, 1, "deliver", {"value": "v1", "instance": 1}),
        ]
    )
    report = check_abcast(trace)
    assert report.verdicts["total-order"] is not None
    assert report.verdicts["agreement"] is None


def test_agreement_catches_a_gap_in_an_order_consistent_prefix():
    trace = make_trace(
        [
            (0, 0, "broadcast", {"value": "v1", "instance": 1}),
            (0, 0, "broadcast", {"value": "v2", "instance": 2}),
            (1, 0, "deliver", {"value": "v1", "instance": 1}),
            (2, 0, "deliver", {"value": "v2", "instance": 2}),
            (1, 1, "deliver", {"value": "v2", "instance": 2}),  # missed v1
        ]
    )
    report = check_abcast(trace)
    assert report.verdicts["agreement"] is not None
    assert report.verdicts["total-order"] is None


# -- primary mapping -----------------------------------------------------------


def primary_epoch_rows(actor, t0, values, instances):
    rows = [(t0, actor, "primary-begin", {})]
    for v, i in zip(values, instances):
        rows.append((t0 + 1, actor, "broadcast", {"value": v, "instance": i}))
        rows.append((t0 + 2, actor, "decide", {"value": v, "instance": i}))
        rows.append((t0 + 2, actor, "deliver", {"value": v, "instance": i}))
    rows.append((t0 + 3, actor, "primary-end", {}))
    return rows


def test_epochs_without_deliveries_get_no_identifier():
    rows = [
        (0, 0, "primary-begin", {}),
        (1, 0, "broadcast", {"value": "lost", "instance": 1}),
        (2, 0, "primary-end", {}),
    ]
    mapping = derive_primary_mapping(make_trace(rows), "tau-seq")
    assert mapping.identified() == []


def test_identifier_is_the_first_delivered_instance_for_tau_seq():
    rows = primary_epoch_rows(0, 0, ["v1", "v2"], [5, 6])
    mapping = derive_primary_mapping(make_trace(rows), "tau-seq")
    assert [e.ident for e in mapping.identified()] == [5]


def test_colliding_identifiers_raise_ambiguous_mapping():
    rows = primary_epoch_rows(0, 0, ["v1"], [5])
    rows += [
        (10, 1, "primary-begin", {}),
        (11, 1, "broadcast", {"value": "v2", "instance": 5}),
        (12, 1, "deliver", {"value": "v2", "instance": 5}),
        (13, 1, "primary-end", {}),
    ]
    with pytest.raises(AmbiguousMappingError):
        derive_primary_mapping(make_trace(rows), "tau-seq")


def test_forged_epoch_without_establishment_raises():
    rows = [
        (0, 0, "primary-begin", {}),
        (1, 0, "broadcast", {"value": "v", "instance": 1}),
        (2, 0, "deliver", {"value": "v", "instance": 1}),
    ]
    with pytest.raises(Exception):
        derive_primary_mapping(make_trace(rows), "barrier-free")


def test_nested_primary_begin_is_rejected():
    rows = [(0, 0, "primary-begin", {}), (1, 0, "primary-begin", {})]
    with pytest.raises(Exception):
        collect_epochs(make_trace(rows))


# -- primary order properties -----------------------------------------------------


def test_primary_integrity_catches_broadcast_before_delivery():
    from poabcast.checker import check_poabcast

    # epoch B broadcasts v2 before it has delivered epoch A's v1; the global
    # delivery order itself stays consistent, so only primary integrity trips
    rows = primary_epoch_rows(0, 0, ["v1"], [1])
    rows += [
        (10, 1, "primary-begin", {}),
        (11, 1, "broadcast", {"value": "v2", "instance": 2}),
        (12, 1, "deliver", {"value": "v1", "instance": 1}),  # too late
        (13, 1, "decide", {"value": "v2", "instance": 2}),
        (13, 1, "deliver", {"value": "v2", "instance": 2}),
        (14, 1, "primary-end", {}),
        (15, 0, "deliver", {"value": "v2", "instance": 2}),
    ]
    trace = make_trace(rows)
    mapping = derive_primary_mapping(trace, "tau-seq")
    report = check_poabcast(trace, mapping)
    assert report.verdicts["primary-integrity"] is not None


def test_local_primary_order_catches_skipped_middle_value():
    from poabcast.checker import check_poabcast

    rows = [
        (0, 0, "primary-begin", {}),
        (1, 0, "broadcast", {"value": "v1", "instance": 1}),
        (1, 0, "broadcast", {"value": "v2", "instance": 2}),
        (1, 0, "broadcast", {"value": "v3", "instance": 3}),
        (2, 0, "deliver", {"value": "v1", "instance": 1}),
        (3, 0, "deliver", {"value": "v3", "instance": 3}),  # v2 skipped
        (4, 0, "primary-end", {}),
    ]
    trace = make_trace(rows)
    mapping = derive_primary_mapping(trace, "tau-seq")
    report = check_poabcast(trace, mapping)
    assert report.verdicts["local-primary-order"] is not None


def test_barrier_catches_crossing_below_earlier_decisions():
    rows = primary_epoch_rows(0, 0, ["v1"], [5])
    rows += [
        (10, 1, "barrier-crossed", {"tau": 2, "dec": 2, "ballot": 4}),
        (10, 1, "primary-begin", {}),
        (11, 1, "broadcast", {"value": "v2", "instance": 6}),
        (12, 1, "decide", {"value": "v2", "instance": 6}),
        (12, 1, "deliver", {"value": "v2", "instance": 6}),
    ]
    trace = make_trace(rows)
    mapping = derive_primary_mapping(trace, "tau-seq")
    msg = check_barrier(trace, mapping)
    assert msg is not None and "dec=2" in msg


def test_barrier_passes_when_crossing_covers_earlier_decisions():
    rows = primary_epoch_rows(0, 0, ["v1"], [5])
    rows += [
        (10, 1, "barrier-crossed", {"tau": 5, "dec": 5, "ballot": 4}),
        (10, 1, "primary-begin", {}),
        (11, 1, "broadcast", {"value": "v2", "instance": 6}),
        (12, 1, "decide", {"value": "v2", "instance": 6}),
        (12, 1, "deliver", {"value": "v2", "instance": 6}),
    ]
    trace = make_trace(rows)
    mapping = derive_primary_mapping(trace, "tau-seq")
    assert check_barrier(trace, mapping) is None


# -- protocol-specific ------------------------------------------------------------


def test_sequentiality_catches_two_outstanding_proposals():
    rows = [
        (0, 0, "broadcast", {"value": "v1", "instance": 1}),
        (1, 0, "broadcast", {"value": "v2", "instance": 2}),
    ]
    assert check_sequentiality(make_trace(rows)) is not None
    rows_ok = [
        (0, 0, "broadcast", {"value": "v1", "instance": 1}),
        (1, 0, "decide", {"value": "v1", "instance": 1}),
        (2, 0, "broadcast", {"value": "v2", "instance": 2}),
    ]
    assert check_sequentiality(make_trace(rows_ok)) is None


def test_barrier_free_checker_catches_seqno_gap():
    rows = [
        (0, 0, "epoch-established", {"epoch": 3, "instance": 1}),
        (1, 0, "deliver", {"value": "v", "instance": 2, "epoch": 3, "seqno": 3}),
    ]
    assert "expected 2" in check_barrier_free(make_trace(rows))


def test_barrier_free_checker_catches_epoch_at_two_instances():
    rows = [
        (0, 0, "epoch-established", {"epoch": 3, "instance": 1}),
        (1, 1, "epoch-established", {"epoch": 3, "instance": 4}),
    ]
    assert check_barrier_free(make_trace(rows)) is not None


def test_barrier_free_checker_catches_shared_election_instance():
    rows = [
        (0, 0, "epoch-established", {"epoch": 3, "instance": 1}),
        (1, 1, "epoch-established", {"epoch": 4, "instance": 1}),
    ]
    assert "share election instance" in check_barrier_free(make_trace(rows))


# -- linearizability ------------------------------------------------------------------


def op(client, reqid, name, invoked, responded, state_before):
    record = f"r({client}:{reqid}:{name})"
    post = _chain(state_before, record)
    return (
        HistoryOp(client, reqid, name, invoked, responded, record, post),
        post,
    )


def test_sequential_history_linearizes():
    o1, s1 = op(3, 1, "a", 0, 1, INITIAL_STATE)
    o2, s2 = op(4, 1, "b", 2, 3, s1)
    assert check_linearizable([o1, o2]) is True


def test_concurrent_history_linearizes_in_either_order():
    o1, s1 = op(3, 1, "a", 0, 5, INITIAL_STATE)
    # overlapping op whose results reflect executing AFTER o1
    o2, _ = op(4, 1, "b", 1, 6, s1)
    assert check_linearizable([o1, o2]) is True


def test_result_from_impossible_order_fails():
    o1, s1 = op(3, 1, "a", 0, 1, INITIAL_STATE)
    # o2 strictly follows o1 in real time but its post-state ignores o1
    o2, _ = op(4, 1, "b", 2, 3, INITIAL_STATE)
    assert check_linearizable([o1, o2]) is False


def test_pending_operation_may_or_may_not_take_effect():
    pending = HistoryOp(3, 1, "a", 0, None, None, None)
    o2, _ = op(4, 1, "b", 1, 2, INITIAL_STATE)  # result as if the pending op never ran
    assert check_linearizable([pending, o2]) is True
    o3, _ = op(4, 2, "c", 3, 4, _chain(o2.post, pending.expected_record()))
    assert check_linearizable([pending, o2, o3]) is True  # pending ran after o2


def test_oversized_history_raises():
    ops = []
    state = INITIAL_STATE
    for k in range(11):
        o, state = op(3, k + 1, f"op{k}", 2 * k, 2 * k + 1, state)
        ops.append(o)
    with pytest.raises(OversizedHistoryError):
        check_linearizable(ops)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from(["a", "b", "c"]), min_size=1, max_size=6))
def test_any_sequential_execution_linearizes(names):
    """Property: histories produced by actually running ops in some order
    against the digest chain always linearize."""
    ops = []
    state = INITIAL_STATE
    for k, name in enumerate(names):
        o, state = op(3 + (k % 2), k + 1, name, 2 * k, 2 * k + 1, state)
        ops.append(o)
    assert check_linearizable(ops) is True


def test_corrupted_reply_fails_linearizability():
    from poabcast.cli import load_scenario
    from poabcast.runner import run

    trace = run(load_scenario("stable-tau-paxos"))
    assert check_linearizable(extract_history(trace)) is True
    # tamper with one response as a corrupted reply table would
    victim = trace.by_kind("response")[0]
    victim.data["record"] = "r(999:999:forged)"
    assert check_linearizable(extract_history(trace)) is False


# -- liveness & plumbing -----------------------------------------------------------------


def test_liveness_without_summary_is_inconclusive():
    from poabcast.checker import check_liveness

    assert check_liveness(make_trace([])) == "inconclusive"


def test_check_all_flags_nothing_on_clean_runs():
    from poabcast.cli import load_scenario
    from poabcast.runner import run

    trace = run(load_scenario("stable-naive"))
    report = check_all(trace)
    assert report.ok
    assert report.liveness == "pass"
