"""Multi-instance single-decree Paxos driven by simulator events.

Each process is acceptor and learner for every instance; a process told
to lead picks a fresh ballot, runs one read phase covering all instances
from its lowest undecided one, then writes picked values (gaps filled
with no-ops) and any queued proposals. Ballots are leader-wide: a single
promise guards all instances.

The only surface beyond propose/decide is ``whitebox_observe``, which is
feature-gated so that black-box deployments cannot reach it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Set, Tuple

from .sim import Simulator
from .values import NOOP, AppValue, Batch, Noop, ValTuple, describe, inner_digest, payload_size


class WhiteboxDisabledError(Exception):
    """The internal observation surface is off for this deployment."""


IDLE = "idle"
READING = "reading"
WRITING = "writing"

# Watchdog period, in multiples of the base message delay. A leader with
# outstanding work and no progress for this long re-runs its read phase
# with a higher ballot.
RETRY_DELAYS = 6


def is_app(value: Any) -> bool:
    if isinstance(value, (AppValue, Batch)):
        return True
    if isinstance(value, ValTuple):
        return is_app(value.value)
    return False


@dataclass(frozen=True)
class Ordered:
    """Transport framing restoring per-peer FIFO order over the network.

    The read phase's no-op gap rule is only sound if each acceptor's
    accepted instances are prefix-closed per primary, which needs in-order
    links between nodes (in deployments this comes from TCP). Nodes number
    their messages per peer and receivers reassemble, so the protocol
    tolerates a network that reorders individual messages.
    """

    seq: int
    msg: Any


@dataclass(frozen=True)
class ReadMsg:
    ballot: int
    lo: int


@dataclass(frozen=True)
class ReadAck:
    ballot: int
    accepted: Tuple[Tuple[int, Tuple[Any, int]], ...]  # (instance, (value, ballot))


@dataclass(frozen=True)
class WriteMsg:
    ballot: int
    instance: int
    value: Any


@dataclass(frozen=True)
class WriteAck:
    ballot: int
    instance: int


@dataclass(frozen=True)
class DecideMsg:
    instance: int
    value: Any


class PaxosNode:
    def __init__(
        self,
        sim: Simulator,
        pid: int,
        n: int,
        deliver: Callable[[Any, int], None],
        whitebox: bool = False,
        sequential: bool = False,
        on_phase_change: Optional[Callable[[], None]] = None,
    ):
        self.sim = sim
        self.pid = pid
        self.n = n
        self.deliver = deliver
        self.whitebox = whitebox
        self.sequential = sequential
        self.on_phase_change = on_phase_change

        # acceptor
        self.promised = 0
        self.accepted: Dict[int, Tuple[Any, int]] = {}
        # learner
        self.decided: Dict[int, Any] = {}
        self._next_decide = 1
        # leader
        self.active = False
        self.phase = IDLE
        self.ballot = 0
        self.read_lo = 1
        self.read_acks: Dict[int, Dict[int, Tuple[Any, int]]] = {}
        self.picked: Dict[int, Tuple[Any, int]] = {}
        self.watermark = 0
        self.queued: Dict[int, Any] = {}
        self.written: Dict[int, Any] = {}
        self.write_acks: Dict[int, Set[int]] = {}
        self._max_round = 0
        self._progress = 0
        self._watchdog_armed = False
        # per-peer FIFO transport state
        self._send_seq: Dict[int, int] = {}
        self._recv_next: Dict[int, int] = {}
        self._recv_buf: Dict[int, Dict[int, Any]] = {}

    # -- helpers --------------------------------------------------------

    @property
    def quorum(self) -> int:
        return self.n // 2 + 1

    def _round(self, ballot: int) -> int:
        return ballot // self.n

    def _note_ballot(self, ballot: int) -> None:
        self._max_round = max(self._max_round, self._round(ballot))

    def lowest_undecided(self) -> int:
        return self._next_decide

    def _send(self, to: int, msg: Any, size: int = 0) -> None:
        if to == self.pid:
            self.sim.send(self.pid, to, msg, size=size)
            return
        seq = self._send_seq.get(to, 0)
        self._send_seq[to] = seq + 1
        self.sim.send(self.pid, to, Ordered(seq, msg), size=size)

    # -- leadership -----------------------------------------------------

    def ensure_leadership(self) -> None:
        if not self.active:
            self.begin_read_phase()

    def begin_read_phase(self) -> None:
        self.active = True
        rnd = self._max_round + 1
        self._max_round = rnd
        self.ballot = rnd * self.n + self.pid
        self.phase = READING
        self.read_lo = self._next_decide
        self.read_acks = {}
        self.picked = {}
        self.watermark = 0
        self.written = {}
        self.write_acks = {}
        self.sim.emit("paxos-read", self.pid, ballot=self.ballot, lo=self.read_lo)
        for q in range(self.n):
            self._send(q, ReadMsg(self.ballot, self.read_lo))
        self._arm_watchdog()

    def relinquish(self) -> None:
        self.active = False
        self.phase = IDLE
        self.queued.clear()

    def whitebox_observe(self) -> Tuple[str, int]:
        if not self.whitebox:
            raise WhiteboxDisabledError(
                "internal consensus state is not observable in this mode"
            )
        if not self.active:
            return (IDLE, 0)
        return (self.phase, self.watermark)

    # -- proposing ------------------------------------------------------

    def propose(self, value: Any, instance: int) -> None:
        if instance in self.decided:
            return
        prev = self.queued.get(instance)
        if prev is not None and prev != value:
            raise ValueError(f"instance {instance} already has a queued proposal")
        self.queued[instance] = value
        self.sim.emit(
            "propose", self.pid, instance=instance, value=describe(value),
            app=is_app(value),
        )
        if self.active and self.phase == WRITING:
            self._drain_queued()

    def _drain_queued(self) -> None:
        for i in sorted(self.queued):
            if i in self.decided:
                continue
            if i in self.written or i in self.picked:
                # this instance was resolved by the read phase; the caller
                # learns about the losing proposal through the decide stream
                continue
            if self.sequential and self._next_decide < i:
                break
            value = self.queued.pop(i)
            self._write(i, value)

    def _write(self, instance: int, value: Any) -> None:
        self.written[instance] = value
        self.write_acks.setdefault(instance, set())
        self.sim.emit(
            "paxos-write", self.pid, instance=instance, value=describe(value),
            ballot=self.ballot, app=is_app(value), payload=inner_digest(value),
        )
        size = payload_size(value)
        for q in range(self.n):
            self._send(q, WriteMsg(self.ballot, instance, value), size=size)
        self._arm_watchdog()

    # -- message handling -------------------------------------------------

    def on_message(self, frm: int, msg: Any) -> None:
        if isinstance(msg, Ordered):
            buf = self._recv_buf.setdefault(frm, {})
            buf[msg.seq] = msg.msg
            while self._recv_next.get(frm, 0) in buf:
                seq = self._recv_next.get(frm, 0)
                self._recv_next[frm] = seq + 1
                self._dispatch(frm, buf.pop(seq))
            return
        self._dispatch(frm, msg)

    def _dispatch(self, frm: int, msg: Any) -> None:
        if isinstance(msg, ReadMsg):
            self._on_read(frm, msg)
        elif isinstance(msg, ReadAck):
            self._on_read_ack(frm, msg)
        elif isinstance(msg, WriteMsg):
            self._on_write(frm, msg)
        elif isinstance(msg, WriteAck):
            self._on_write_ack(frm, msg)
        elif isinstance(msg, DecideMsg):
            self._learn(msg.instance, msg.value, announce=False)

    def _on_read(self, frm: int, msg: ReadMsg) -> None:
        self._note_ballot(msg.ballot)
        if msg.ballot <= self.promised:
            return
        self.promised = msg.ballot
        report = tuple(
            (i, acc) for i, acc in sorted(self.accepted.items()) if i >= msg.lo
        )
        self._send(frm, ReadAck(msg.ballot, report))

    def _on_read_ack(self, frm: int, msg: ReadAck) -> None:
        if not self.active or self.phase != READING or msg.ballot != self.ballot:
            return
        self.read_acks[frm] = dict(msg.accepted)
        if len(self.read_acks) < self.quorum:
            return
        for report in self.read_acks.values():
            for i, (value, ballot) in report.items():
                cur = self.picked.get(i)
                if cur is None or ballot > cur[1]:
                    self.picked[i] = (value, ballot)
        self.watermark = max(self.picked, default=0)
        for i in range(self.read_lo, self.watermark + 1):
            self.picked.setdefault(i, (NOOP, 0))
        self.phase = WRITING
        self._progress += 1
        self.sim.emit(
            "paxos-writing", self.pid, ballot=self.ballot, watermark=self.watermark
        )
        for i in sorted(self.picked):
            if i not in self.decided:
                self._write(i, self.picked[i][0])
        if self.on_phase_change is not None:
            self.on_phase_change()
        self._drain_queued()

    def _on_write(self, frm: int, msg: WriteMsg) -> None:
        self._note_ballot(msg.ballot)
        if msg.ballot < self.promised:
            return
        self.promised = msg.ballot
        self.accepted[msg.instance] = (msg.value, msg.ballot)
        self._send(frm, WriteAck(msg.ballot, msg.instance))

    def _on_write_ack(self, frm: int, msg: WriteAck) -> None:
        if not self.active or msg.ballot != self.ballot:
            return
        acks = self.write_acks.setdefault(msg.instance, set())
        acks.add(frm)
        if len(acks) >= self.quorum and msg.instance not in self.decided:
            self._learn(msg.instance, self.written[msg.instance], announce=True)

    # -- learning -------------------------------------------------------

    def _learn(self, instance: int, value: Any, announce: bool) -> None:
        if instance in self.decided:
            return
        self.decided[instance] = value
        self._progress += 1
        self.sim.emit(
            "decide", self.pid, instance=instance, value=describe(value),
            app=is_app(value),
        )
        if announce:
            for q in range(self.n):
                if q != self.pid:
                    self._send(q, DecideMsg(instance, value))
        self.queued.pop(instance, None)
        while self._next_decide in self.decided:
            i = self._next_decide
            self._next_decide = i + 1
            self.deliver(self.decided[i], i)
        if self.active and self.phase == WRITING:
            self._drain_queued()

    def advance_to(self, instance: int) -> None:
        """Fast-forward the gap-free decide stream past ``instance``."""
        self._next_decide = max(self._next_decide, instance + 1)

    # -- watchdog ---------------------------------------------------------

    def _arm_watchdog(self) -> None:
        if self._watchdog_armed:
            return
        self._watchdog_armed = True
        period = RETRY_DELAYS * self.sim.delay_model.base
        stamp = self._progress
        self.sim.schedule(
            self.sim.now + period,
            lambda: self._watchdog(stamp),
            actor=self.pid,
        )

    def _watchdog(self, stamp: int) -> None:
        self._watchdog_armed = False
        if not self.active:
            return
        outstanding = (
            self.phase == READING
            or bool(self.queued)
            or any(i not in self.decided for i in self.written)
        )
        if not outstanding:
            return
        if self._progress == stamp:
            self.begin_read_phase()
        else:
            self._arm_watchdog()
