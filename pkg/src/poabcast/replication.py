"""Passive replication on top of a primary-order broadcast layer.

The primary executes client operations against a shadow state and
broadcasts the resulting state updates; every replica applies delivered
updates to its actual state. An update carries the digests of the states
before and after execution: applying it on any other state is a hard
fault, so a replica that receives a mismatching update halts and the
trace records it. The replicated "service" is a digest chain, which makes
execution deterministic and mismatches detectable without modelling a
real data structure.

Duplicate suppression is two-level: a replied table keyed by
(client, request id) across the whole run, and a per-epoch executed set
so a primary does not re-execute an operation it already has in flight.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Set, Tuple

from .sim import Simulator
from .values import AppValue

INITIAL_STATE = hashlib.sha256(b"genesis").hexdigest()[:12]


def _digest(pre: str, record: str) -> str:
    return hashlib.sha256(f"{pre}|{record}".encode()).hexdigest()[:12]


@dataclass(frozen=True)
class StateUpdate:
    client: int
    reqid: int
    pre: str
    record: str
    post: str


@dataclass(frozen=True)
class Request:
    client: int
    reqid: int
    op: str
    size: int = 0


@dataclass(frozen=True)
class Reply:
    client: int
    reqid: int
    record: str
    post: str


def execute(state: str, req: Request) -> StateUpdate:
    record = f"r({req.client}:{req.reqid}:{req.op})"
    return StateUpdate(req.client, req.reqid, state, record, _digest(state, record))


def update_to_value(update: StateUpdate, vid: str, size: int = 0) -> AppValue:
    meta = (
        ("client", update.client),
        ("reqid", update.reqid),
        ("pre", update.pre),
        ("record", update.record),
        ("post", update.post),
    )
    return AppValue(vid=vid, body=update.record, size=size, meta=meta)


def value_to_update(value: AppValue) -> StateUpdate:
    m = dict(value.meta)
    return StateUpdate(m["client"], m["reqid"], m["pre"], m["record"], m["post"])


class Replica:
    """One replica: broadcast-layer delegate plus client-facing frontend."""

    def __init__(self, sim: Simulator, pid: int, layer: Any):
        self.sim = sim
        self.pid = pid
        self.layer = layer
        layer.delegate = self

        self.state = INITIAL_STATE
        self.shadow: Optional[str] = None
        self.initialized = False
        self.halted = False
        self.replied: Dict[Tuple[int, int], Reply] = {}
        self.executed_epoch: Set[Tuple[int, int]] = set()
        self.pending: List[Request] = []
        self._seq = 0

    # -- broadcast layer callbacks -------------------------------------------

    def on_primary_change(self, primary: bool) -> None:
        if primary:
            self.shadow = self.state
            self.initialized = True
            self.executed_epoch = set()
            for req in list(self.pending):
                self._maybe_execute(req)
        else:
            self.initialized = False
            self.shadow = None

    def on_deliver(self, value: Any) -> None:
        if self.halted:
            return
        items = value.items if hasattr(value, "items") else (value,)
        for item in items:
            self._apply(value_to_update(item))

    def _apply(self, update: StateUpdate) -> None:
        key = (update.client, update.reqid)
        if key in self.replied:
            # a re-execution of an operation whose original update already
            # made it through; the original answer stands
            return
        if update.pre != self.state:
            self.halted = True
            self.sim.emit(
                "apply-bot", self.pid, client=update.client, reqid=update.reqid,
                expected=update.pre, state=self.state,
            )
            self.sim.trace.summary["halted"] = sorted(
                set(self.sim.trace.summary.get("halted", [])) | {self.pid}
            )
            return
        self.state = update.post
        reply = Reply(update.client, update.reqid, update.record, update.post)
        self.replied[key] = reply
        self.pending = [r for r in self.pending if (r.client, r.reqid) != key]
        self.sim.emit(
            "applied", self.pid, client=update.client, reqid=update.reqid,
            record=update.record, state=self.state,
        )
        self.sim.send(self.pid, update.client, reply)

    # -- client requests ------------------------------------------------------

    def on_request(self, req: Request) -> None:
        if self.halted:
            return
        self._handle_request(req)

    def _handle_request(self, req: Request) -> None:
        key = (req.client, req.reqid)
        if key in self.replied:
            self.sim.send(self.pid, req.client, self.replied[key])
            return
        # a request stays pending until its update is applied; if the epoch
        # ends with the update undecided, the next epoch re-executes it
        if all((r.client, r.reqid) != key for r in self.pending):
            self.pending.append(req)
        self._maybe_execute(req)

    def _maybe_execute(self, req: Request) -> None:
        key = (req.client, req.reqid)
        if key in self.replied or key in self.executed_epoch:
            return
        if not (self.initialized and self.layer.is_primary()):
            return
        self.executed_epoch.add(key)
        update = execute(self.shadow, req)
        self.shadow = update.post
        self._seq += 1
        vid = f"u{req.client}.{req.reqid}.{self.pid}.{self._seq}"
        self.sim.emit(
            "execute", self.pid, client=req.client, reqid=req.reqid,
            pre=update.pre, post=update.post,
        )
        self.layer.poabcast(update_to_value(update, vid, size=req.size))

    # -- simulator plumbing ------------------------------------------------------

    def on_omega(self, leader: int) -> None:
        self.layer.on_omega(leader)

    def on_message(self, frm: int, msg: Any) -> None:
        if isinstance(msg, Request):
            self.on_request(msg)
        elif isinstance(msg, Reply):
            pass  # stray reply routed to a replica id; ignore
        else:
            self.layer.on_message(frm, msg)


class Client:
    """Closed-loop client: one outstanding operation, retransmit until replied.

    Requests go to every replica; whichever is primary executes, the rest
    buffer. Actor ids for clients start at n.
    """

    def __init__(
        self,
        sim: Simulator,
        cid: int,
        n: int,
        ops: List[str],
        retry_every: int = 0,
        op_size: int = 0,
        start_at: int = 0,
    ):
        self.sim = sim
        self.cid = cid
        self.n = n
        self.ops = list(ops)
        self.retry_every = retry_every or 4 * sim.delay_model.base
        self.op_size = op_size
        self.start_at = start_at
        self.next_op = 0
        self.waiting: Optional[Request] = None

    def on_start(self) -> None:
        self.sim.schedule(max(self.sim.now, self.start_at), self._issue, actor=self.cid)

    def _issue(self) -> None:
        if self.next_op >= len(self.ops):
            return
        req = Request(self.cid, self.next_op + 1, self.ops[self.next_op], self.op_size)
        self.next_op += 1
        self.waiting = req
        self.sim.emit(
            "request", self.cid, reqid=req.reqid, op=req.op, size=req.size
        )
        self._send(req)

    def _send(self, req: Request) -> None:
        for p in range(self.n):
            self.sim.send(self.cid, p, req, size=req.size)
        self.sim.schedule(
            self.sim.now + self.retry_every, lambda: self._retry(req), actor=self.cid
        )

    def _retry(self, req: Request) -> None:
        if self.waiting is not None and self.waiting.reqid == req.reqid:
            self.sim.emit("retransmit", self.cid, reqid=req.reqid)
            self._send(req)

    def on_message(self, frm: int, msg: Any) -> None:
        if not isinstance(msg, Reply):
            return
        if self.waiting is None or msg.reqid != self.waiting.reqid:
            return
        self.waiting = None
        self.sim.emit(
            "response", self.cid, reqid=msg.reqid, record=msg.record, post=msg.post
        )
        self._issue()


class ScriptedClient:
    """Client with fully scripted sends: (time, replica, reqid, op, size).

    Each send targets exactly one replica and is never retransmitted, which
    is what adversarial and latency-measurement schedules need.
    """

    def __init__(self, sim: Simulator, cid: int, sends: List[Tuple[int, int, int, str, int]]):
        self.sim = sim
        self.cid = cid
        self.sends = list(sends)
        self.seen: Set[int] = set()

    def on_start(self) -> None:
        for at, replica, reqid, op, size in self.sends:
            req = Request(self.cid, reqid, op, size)
            def push(req=req, replica=replica):
                self.sim.emit(
                    "request", self.cid, reqid=req.reqid, op=req.op,
                    size=req.size, to=replica,
                )
                self.sim.send(self.cid, replica, req, size=req.size)
            self.sim.schedule(at, push, actor=self.cid)

    def on_message(self, frm: int, msg: Any) -> None:
        if isinstance(msg, Reply) and msg.reqid not in self.seen:
            self.seen.add(msg.reqid)
            self.sim.emit(
                "response", self.cid, reqid=msg.reqid, record=msg.record, post=msg.post
            )
