"""Post-hoc property verification over traces.

All checks are pure functions of a trace: same trace, same report. The
catalogue covers the atomic-broadcast core (integrity, total order,
agreement), the primary-order extensions (local primary order, global
primary order, primary integrity), the barrier contract, replication
invariants (at-most-once, no failed applies, digest convergence),
protocol-specific invariants, liveness, and a brute-force
linearizability oracle for small client histories.

Primary epochs are intervals between primary-begin and primary-end
events at one process. Epochs in which at least one broadcast value was
delivered get an identifier; how the identifier is derived depends on
the protocol (decided instance, ballot, or election instance), and the
identifiers' integer order is the epoch order every ordering property is
checked against.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Set, Tuple

from .replication import INITIAL_STATE
from .trace import Trace, TraceEvent

SAFETY_PROPERTIES = (
    "integrity",
    "total-order",
    "agreement",
    "local-primary-order",
    "global-primary-order",
    "primary-integrity",
    "barrier",
    "at-most-once",
    "no-failed-applies",
    "digest-convergence",
)


class CheckerError(Exception):
    pass


class AmbiguousMappingError(CheckerError):
    """Two primary epochs claimed the same identifier: a protocol bug."""


class OversizedHistoryError(CheckerError):
    """History too large for the exhaustive linearizability search."""


@dataclass
class Epoch:
    process: int
    begin_index: int
    end_index: float  # inf if still open at end of trace
    begin_time: int
    crossing: Optional[TraceEvent] = None  # barrier-crossed event, if any
    established: Optional[TraceEvent] = None  # epoch-established event, if any
    broadcasts: List[TraceEvent] = field(default_factory=list)
    ident: Optional[int] = None  # lambda; None if nothing delivered

    @property
    def key(self) -> Tuple[int, int]:
        return (self.process, self.begin_index)


@dataclass
class PrimaryMapping:
    epochs: List[Epoch]

    def identified(self) -> List[Epoch]:
        return sorted(
            (e for e in self.epochs if e.ident is not None), key=lambda e: e.ident
        )


@dataclass
class Report:
    verdicts: Dict[str, Optional[str]] = field(default_factory=dict)
    liveness: str = "skipped"  # "pass" | "inconclusive" | "skipped"
    linearizable: Optional[bool] = None  # None when skipped

    def record(self, prop: str, violation: Optional[str]) -> None:
        self.verdicts[prop] = violation

    @property
    def violations(self) -> Dict[str, str]:
        return {p: v for p, v in self.verdicts.items() if v is not None}

    @property
    def ok(self) -> bool:
        return not self.violations and self.linearizable is not False


# -- trace digestion ---------------------------------------------------------


def _deliveries(trace: Trace) -> Dict[int, List[TraceEvent]]:
    out: Dict[int, List[TraceEvent]] = {}
    for e in trace.by_kind("deliver"):
        out.setdefault(e.actor, []).append(e)
    return out


def _first_delivery(trace: Trace) -> Dict[str, TraceEvent]:
    first: Dict[str, TraceEvent] = {}
    for e in trace.by_kind("deliver"):
        first.setdefault(e.data["value"], e)
    return first


def collect_epochs(trace: Trace) -> List[Epoch]:
    open_epochs: Dict[int, Epoch] = {}
    last_crossing: Dict[int, TraceEvent] = {}
    last_established: Dict[int, TraceEvent] = {}
    epochs: List[Epoch] = []
    for e in trace:
        if e.kind == "barrier-crossed":
            last_crossing[e.actor] = e
        elif e.kind == "epoch-established":
            last_established[e.actor] = e
        elif e.kind == "primary-begin":
            if e.actor in open_epochs:
                raise CheckerError(f"nested primary-begin at process {e.actor}")
            epoch = Epoch(e.actor, e.index, float("inf"), e.time)
            epoch.crossing = last_crossing.pop(e.actor, None)
            epoch.established = last_established.get(e.actor)
            open_epochs[e.actor] = epoch
            epochs.append(epoch)
        elif e.kind == "primary-end":
            epoch = open_epochs.pop(e.actor, None)
            if epoch is None:
                raise CheckerError(f"primary-end without begin at process {e.actor}")
            epoch.end_index = e.index
        elif e.kind == "broadcast":
            epoch = open_epochs.get(e.actor)
            if epoch is not None:
                epoch.broadcasts.append(e)
    return epochs


def derive_primary_mapping(trace: Trace, protocol: str) -> PrimaryMapping:
    """Assign identifiers to epochs that had at least one value delivered.

    tau-seq and naive: the decided instance of the epoch's first delivered
    value. tau-paxos: the ballot the primary crossed the barrier with.
    barrier-free: the instance in which the epoch was established.
    """
    epochs = collect_epochs(trace)
    first = _first_delivery(trace)
    for epoch in epochs:
        delivered = [b for b in epoch.broadcasts if b.data["value"] in first]
        if not delivered:
            continue
        if protocol == "tau-paxos":
            if epoch.crossing is None:
                raise CheckerError(
                    f"epoch at process {epoch.process} has no barrier crossing"
                )
            epoch.ident = epoch.crossing.data["ballot"]
        elif protocol == "barrier-free":
            if epoch.established is None:
                raise CheckerError(
                    f"epoch at process {epoch.process} was never established"
                )
            epoch.ident = epoch.established.data["instance"]
        else:  # tau-seq, naive: decided instance of the first delivered value
            epoch.ident = min(
                first[b.data["value"]].data["instance"] for b in delivered
            )
    seen: Dict[int, Epoch] = {}
    for epoch in epochs:
        if epoch.ident is None:
            continue
        if epoch.ident in seen:
            raise AmbiguousMappingError(
                f"identifier {epoch.ident} claimed by epochs at processes "
                f"{seen[epoch.ident].process} and {epoch.process}"
            )
        seen[epoch.ident] = epoch
    return PrimaryMapping(epochs)


def global_delivery_order(trace: Trace) -> Tuple[List[str], Optional[str]]:
    """Merge per-process delivery sequences; they must form a prefix chain.

    Returns (longest sequence, violation description or None).
    """
    per_process = {
        p: [e.data["value"] for e in evs] for p, evs in _deliveries(trace).items()
    }
    longest: List[str] = []
    for seq in per_process.values():
        if len(seq) > len(longest):
            longest = seq
    for p, seq in per_process.items():
        for i, v in enumerate(seq):
            if i >= len(longest) or longest[i] != v:
                return longest, (
                    f"process {p} delivery #{i} is {v}, "
                    f"global order has {longest[i] if i < len(longest) else 'nothing'}"
                )
    return longest, None


# -- atomic broadcast properties --------------------------------------------


def check_abcast(trace: Trace) -> Report:
    report = Report()
    broadcast_values = {e.data["value"] for e in trace.by_kind("broadcast")}

    integrity = None
    for p, evs in _deliveries(trace).items():
        seen: Set[str] = set()
        for e in evs:
            v = e.data["value"]
            if v not in broadcast_values:
                integrity = f"process {p} delivered {v} which was never broadcast"
                break
            if v in seen:
                integrity = f"process {p} delivered {v} twice"
                break
            seen.add(v)
        if integrity:
            break
    report.record("integrity", integrity)

    longest, chain_violation = global_delivery_order(trace)
    if chain_violation is None:
        report.record("total-order", None)
        report.record("agreement", None)
    else:
        # classify: an order conflict is a total-order violation, a gap in an
        # otherwise order-consistent sequence breaks agreement
        conflict = False
        per_process = _deliveries(trace)
        pos = {v: i for i, v in enumerate(longest)}
        for p, evs in per_process.items():
            indices = [pos[e.data["value"]] for e in evs if e.data["value"] in pos]
            if indices != sorted(indices):
                conflict = True
        report.record("total-order", chain_violation if conflict else None)
        report.record("agreement", None if conflict else chain_violation)
    return report


# -- primary order properties -------------------------------------------------


def check_poabcast(trace: Trace, mapping: PrimaryMapping) -> Report:
    report = Report()
    longest, chain_violation = global_delivery_order(trace)
    pos = {v: i for i, v in enumerate(longest)}
    first = _first_delivery(trace)

    ordered = mapping.identified()

    # local primary order: delivered values of an epoch are a prefix of its
    # broadcast order, delivered in that order
    lpo = None
    for epoch in ordered:
        digests = [b.data["value"] for b in epoch.broadcasts]
        delivered_flags = [d in pos for d in digests]
        if False in delivered_flags and True in delivered_flags[delivered_flags.index(False):]:
            i = delivered_flags.index(False)
            j = i + delivered_flags[i:].index(True)
            lpo = (
                f"epoch {epoch.ident}: {digests[j]} delivered but the earlier "
                f"broadcast {digests[i]} was not"
            )
            break
        positions = [pos[d] for d in digests if d in pos]
        if positions != sorted(positions):
            lpo = f"epoch {epoch.ident}: deliveries out of broadcast order"
            break
    report.record("local-primary-order", lpo)

    # global primary order: all deliveries of an earlier epoch precede all
    # deliveries of a later one
    gpo = None
    spans = []
    for epoch in ordered:
        positions = [pos[b.data["value"]] for b in epoch.broadcasts if b.data["value"] in pos]
        if positions:
            spans.append((epoch.ident, min(positions), max(positions)))
    for (l1, lo1, hi1), (l2, lo2, hi2) in zip(spans, spans[1:]):
        if hi1 > lo2:
            gpo = (
                f"epochs {l1} and {l2} interleave in the delivery order "
                f"(positions {hi1} vs {lo2})"
            )
            break
    report.record("global-primary-order", gpo)

    # primary integrity: before broadcasting a delivered value, a primary has
    # itself delivered every delivered value of every earlier epoch
    pi = None
    my_deliveries: Dict[Tuple[int, str], int] = {}
    for e in trace.by_kind("deliver"):
        my_deliveries.setdefault((e.actor, e.data["value"]), e.index)
    for i, later in enumerate(ordered):
        later_bcasts = [
            b for b in later.broadcasts if b.data["value"] in pos
        ]
        if not later_bcasts:
            continue
        for earlier in ordered[:i]:
            for b_old in earlier.broadcasts:
                u = b_old.data["value"]
                if u not in pos:
                    continue
                for b_new in later_bcasts:
                    seen_at = my_deliveries.get((later.process, u))
                    if seen_at is None or seen_at > b_new.index:
                        pi = (
                            f"epoch {later.ident} (process {later.process}) "
                            f"broadcast {b_new.data['value']} before delivering "
                            f"{u} from earlier epoch {earlier.ident}"
                        )
                        break
                if pi:
                    break
            if pi:
                break
        if pi:
            break
    report.record("primary-integrity", pi)

    # cross-check: with integrity, total order, agreement, local primary
    # order and primary integrity all passing, global primary order cannot
    # fail on its own
    base = check_abcast(trace)
    others_ok = (
        not base.violations
        and report.verdicts["local-primary-order"] is None
        and report.verdicts["primary-integrity"] is None
    )
    if others_ok and gpo is not None:
        raise CheckerError(
            f"ordering cross-check broken: global primary order violated "
            f"({gpo}) while all implying properties hold"
        )
    return report


def check_barrier(trace: Trace, mapping: PrimaryMapping) -> Optional[str]:
    """Each crossing's decided watermark covers every instance at which an
    earlier epoch's value was decided (finite-trace restriction)."""
    decided_at: Dict[str, int] = {}
    for e in trace.by_kind("decide"):
        decided_at.setdefault(e.data["value"], e.data["instance"])
    ordered = mapping.identified()
    for i, epoch in enumerate(ordered):
        if epoch.crossing is None:
            continue
        dec = epoch.crossing.data["dec"]
        for earlier in ordered[:i]:
            for b in earlier.broadcasts:
                inst = decided_at.get(b.data["value"])
                if inst is not None and inst > dec:
                    return (
                        f"epoch {epoch.ident} crossed with dec={dec} but "
                        f"earlier epoch {earlier.ident}'s value "
                        f"{b.data['value']} was decided at instance {inst}"
                    )
    return None


# -- replication invariants ---------------------------------------------------


def check_replication(trace: Trace) -> Report:
    report = Report()

    bots = trace.by_kind("apply-bot")
    report.record(
        "no-failed-applies",
        f"process {bots[0].actor} hit a failed apply at t={bots[0].time}"
        if bots
        else None,
    )

    # at-most-once: a request key is applied at most once per replica, and
    # every replica that applies it records the same result
    amo = None
    outcome: Dict[Tuple[int, int], Tuple[str, str]] = {}
    per_replica: Set[Tuple[int, int, int]] = set()
    for e in trace.by_kind("applied"):
        key = (e.data["client"], e.data["reqid"])
        rkey = (e.actor,) + key
        if rkey in per_replica:
            amo = f"process {e.actor} applied request {key} twice"
            break
        per_replica.add(rkey)
        result = (e.data["record"], e.data["state"])
        if outcome.setdefault(key, result) != result:
            amo = f"request {key} applied with diverging results"
            break
    report.record("at-most-once", amo)

    # digest convergence: per-replica applied state chains form a prefix chain
    chains: Dict[int, List[str]] = {}
    for e in trace.by_kind("applied"):
        chains.setdefault(e.actor, []).append(e.data["state"])
    longest: List[str] = []
    for c in chains.values():
        if len(c) > len(longest):
            longest = c
    conv = None
    for p, c in chains.items():
        if c != longest[: len(c)]:
            conv = f"process {p} state chain diverges from the common chain"
            break
    report.record("digest-convergence", conv)
    return report


# -- protocol-specific invariants ----------------------------------------------


def check_sequentiality(trace: Trace) -> Optional[str]:
    """At most one undecided application proposal per process at any instant."""
    outstanding: Dict[int, Set[int]] = {}
    for e in trace:
        if e.kind == "broadcast":
            pend = outstanding.setdefault(e.actor, set())
            pend.add(e.data["instance"])
            if len(pend) > 1:
                return (
                    f"process {e.actor} had {sorted(pend)} outstanding at "
                    f"t={e.time}"
                )
        elif e.kind == "decide":
            outstanding.get(e.actor, set()).discard(e.data["instance"])
    return None


def check_consensus(trace: Trace) -> Optional[str]:
    """Agreement at the consensus level: one value per decided instance."""
    chosen: Dict[int, str] = {}
    for e in trace.by_kind("decide"):
        v = chosen.setdefault(e.data["instance"], e.data["value"])
        if v != e.data["value"]:
            return (
                f"instance {e.data['instance']} decided as both {v} and "
                f"{e.data['value']}"
            )
    return None


def check_barrier_free(trace: Trace) -> Optional[str]:
    """Election-protocol invariants on barrier-free traces.

    Epoch numbers map to one election instance everywhere; per process and
    epoch, delivered sequence numbers are gap-free ascending from the
    election instance + 1; each value is delivered at most once per process.
    """
    election_at: Dict[int, int] = {}
    for e in trace.by_kind("epoch-established"):
        inst = election_at.setdefault(e.data["epoch"], e.data["instance"])
        if inst != e.data["instance"]:
            return (
                f"epoch {e.data['epoch']} established at two instances "
                f"({inst} and {e.data['instance']})"
            )
    expected: Dict[Tuple[int, int], int] = {}
    for e in trace.by_kind("deliver"):
        key = (e.actor, e.data["epoch"])
        want = expected.get(key, election_at.get(e.data["epoch"], 0) + 1)
        if e.data["seqno"] != want:
            return (
                f"process {e.actor} epoch {e.data['epoch']}: delivered seqno "
                f"{e.data['seqno']}, expected {want}"
            )
        expected[key] = want + 1
    # epoch numbers from different proposers carry no global order; the epoch
    # order is by election instance, so instances must be distinct
    by_instance: Dict[int, int] = {}
    for epoch, inst in election_at.items():
        other = by_instance.setdefault(inst, epoch)
        if other != epoch:
            return f"epochs {other} and {epoch} share election instance {inst}"
    return None


# -- liveness --------------------------------------------------------------------


def check_liveness(trace: Trace) -> str:
    """'pass' when the run demonstrably made progress, else 'inconclusive'.

    A finite trace can never prove a liveness failure, so the negative
    verdict only says the horizon was too short to tell.
    """
    horizon = trace.summary.get("horizon")
    base = trace.summary.get("base_delay", 10)
    stable_from = trace.summary.get("stable_from")
    crashed = {int(p) for p in trace.summary.get("crashes", {})}
    if horizon is None or stable_from is None:
        return "inconclusive"
    slack = 20 * base

    # the stable leader must have an open primary epoch at the horizon
    views: Dict[int, int] = {}
    for e in trace.by_kind("omega"):
        views[e.actor] = e.data["leader"]
    leaders = {l for p, l in views.items() if p not in crashed}
    if len(leaders) != 1:
        return "inconclusive"
    leader = leaders.pop()
    state = False
    for e in trace:
        if e.actor != leader:
            continue
        if e.kind == "primary-begin":
            state = True
        elif e.kind == "primary-end":
            state = False
    if not state:
        return "inconclusive"

    # every request issued early enough has a response
    responded = {(e.actor, e.data["reqid"]) for e in trace.by_kind("response")}
    for e in trace.by_kind("request"):
        if e.time <= horizon - slack and (e.actor, e.data["reqid"]) not in responded:
            return "inconclusive"

    # every value delivered early enough reached every correct process
    first = _first_delivery(trace)
    per_process = _deliveries(trace)
    correct = [p for p in per_process if p not in crashed]
    for v, e in first.items():
        if e.time > horizon - slack:
            continue
        for p in correct:
            if all(d.data["value"] != v for d in per_process.get(p, [])):
                return "inconclusive"
    return "pass"


# -- linearizability ---------------------------------------------------------------


def _chain(state: str, record: str) -> str:
    return hashlib.sha256(f"{state}|{record}".encode()).hexdigest()[:12]


@dataclass(frozen=True)
class HistoryOp:
    client: int
    reqid: int
    op: str
    invoked: int  # event index
    responded: Optional[int]  # event index, None if pending
    record: Optional[str]
    post: Optional[str]

    def expected_record(self) -> str:
        return f"r({self.client}:{self.reqid}:{self.op})"


def extract_history(trace: Trace) -> List[HistoryOp]:
    invokes: Dict[Tuple[int, int], TraceEvent] = {}
    responses: Dict[Tuple[int, int], TraceEvent] = {}
    for e in trace.by_kind("request"):
        invokes.setdefault((e.actor, e.data["reqid"]), e)
    for e in trace.by_kind("response"):
        responses.setdefault((e.actor, e.data["reqid"]), e)
    ops = []
    for key, inv in sorted(invokes.items(), key=lambda kv: kv[1].index):
        resp = responses.get(key)
        ops.append(
            HistoryOp(
                client=key[0],
                reqid=key[1],
                op=inv.data["op"],
                invoked=inv.index,
                responded=resp.index if resp else None,
                record=resp.data["record"] if resp else None,
                post=resp.data["post"] if resp else None,
            )
        )
    return ops


def check_linearizable(history: List[HistoryOp], max_ops: int = 10) -> bool:
    """Exhaustive search for a legal sequential order respecting real time.

    Completed operations must all be placed with their observed results;
    pending operations may be placed (their effect may have been applied)
    or dropped. Raises OversizedHistoryError above ``max_ops`` operations.
    """
    if len(history) > max_ops:
        raise OversizedHistoryError(
            f"{len(history)} operations exceed the exhaustive-search cap of {max_ops}"
        )
    completed = [op for op in history if op.responded is not None]
    pending = [op for op in history if op.responded is None]

    def precedes(a: HistoryOp, b: HistoryOp) -> bool:
        return a.responded is not None and a.responded < b.invoked

    seen_states: Set[Tuple[frozenset, str]] = set()

    def search(state: str, placed: frozenset) -> bool:
        if all(id(op) in placed for op in completed):
            return True
        key = (placed, state)
        if key in seen_states:
            return False
        seen_states.add(key)
        for op in completed + pending:
            if id(op) in placed:
                continue
            if any(
                id(other) not in placed and precedes(other, op)
                for other in completed
                if other is not op
            ):
                continue
            record = op.expected_record()
            post = _chain(state, record)
            if op.responded is not None:
                if op.record != record or op.post != post:
                    continue
            if search(post, placed | {id(op)}):
                return True
        return False

    return search(INITIAL_STATE, frozenset())


# -- one-stop entry point --------------------------------------------------------------


def check_all(trace: Trace, linearizability: bool = True) -> Report:
    protocol = trace.summary.get("protocol", "naive")
    report = Report()
    report.record("consensus-agreement", check_consensus(trace))
    report.verdicts.update(check_abcast(trace).verdicts)
    mapping = derive_primary_mapping(trace, protocol)
    report.verdicts.update(check_poabcast(trace, mapping).verdicts)
    if protocol in ("tau-seq", "tau-paxos"):
        report.record("barrier", check_barrier(trace, mapping))
    if protocol == "tau-seq":
        report.record("sequential-instances", check_sequentiality(trace))
    if protocol == "barrier-free":
        report.record("election-order", check_barrier_free(trace))
    report.verdicts.update(check_replication(trace).verdicts)
    report.liveness = check_liveness(trace)
    if linearizability:
        try:
            report.linearizable = check_linearizable(extract_history(trace))
        except OversizedHistoryError:
            report.linearizable = None
    return report
