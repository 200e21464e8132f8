"""Deterministic discrete-event simulation kernel.

Virtual time is integral ticks. Events scheduled at equal times fire in
insertion order, so a run is a pure function of its inputs. Message loss
happens only through crashes; links are reliable and FIFO per pair unless
per-message reordering is switched on.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

from .trace import Trace, TraceEvent


class SchedulingError(Exception):
    """Raised when an event is scheduled in the virtual past."""


@dataclass(frozen=True)
class DelayModel:
    """Message delay: fixed delta, or seeded jitter in [min, max].

    Jitter draws are a pure function of (seed, message sequence number),
    so re-running a scenario reproduces every delivery time.
    """

    kind: str  # "fixed" | "jitter"
    delta: int = 1
    min_delay: int = 1
    max_delay: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind == "fixed":
            if self.delta < 1:
                raise ValueError("fixed delay must be >= 1 tick")
        elif self.kind == "jitter":
            if self.min_delay < 1 or self.min_delay > self.max_delay:
                raise ValueError("jitter bounds must satisfy 1 <= min <= max")
        else:
            raise ValueError(f"unknown delay model kind: {self.kind}")

    def delay(self, seq: int) -> int:
        if self.kind == "fixed":
            return self.delta
        rng = random.Random((self.seed << 32) ^ seq)
        return rng.randint(self.min_delay, self.max_delay)

    @property
    def base(self) -> int:
        return self.delta if self.kind == "fixed" else self.max_delay

    @classmethod
    def fixed(cls, delta: int) -> "DelayModel":
        return cls(kind="fixed", delta=delta)

    @classmethod
    def jitter(cls, min_delay: int, max_delay: int, seed: int) -> "DelayModel":
        return cls(kind="jitter", min_delay=min_delay, max_delay=max_delay, seed=seed)


@dataclass
class OmegaScript:
    """Scripted leader-oracle outputs: ordered (from_time, per-process output).

    A segment may map different processes to different leaders; the final
    segment must map every process to one common output for the oracle's
    eventual-agreement contract to hold.
    """

    segments: List[Tuple[int, Dict[int, int]]]

    def validate(self, n: int, crashes: Dict[int, int]) -> None:
        if not self.segments:
            raise ValueError("omega script needs at least one segment")
        times = [t for t, _ in self.segments]
        if times != sorted(times) or len(set(times)) != len(times):
            raise ValueError("omega segment start times must strictly increase")
        for t, outputs in self.segments:
            for p, out in outputs.items():
                if not (0 <= p < n and 0 <= out < n):
                    raise ValueError("omega outputs must name processes in [0, n)")
        final = self.segments[-1][1]
        finals = {final.get(p) for p in range(n) if p not in crashes}
        finals.discard(None)
        if len(finals) > 1:
            raise ValueError("final omega segment must agree on one leader")
        if finals and next(iter(finals)) in crashes:
            raise ValueError("final omega segment must name a correct process")

    def output(self, p: int, t: int) -> int:
        current = None
        for start, outputs in self.segments:
            if start > t:
                break
            if p in outputs:
                current = outputs[p]
        if current is None:
            # segments that omit a process keep its previous output; fall back
            # to the first segment that mentions it
            for _, outputs in self.segments:
                if p in outputs:
                    return outputs[p]
            raise ValueError(f"omega script never names process {p}")
        return current

    @classmethod
    def single(cls, n: int, leader: int) -> "OmegaScript":
        return cls([(0, {p: leader for p in range(n)})])


class Simulator:
    """Single-threaded event loop with virtual clock, links, crashes and omega."""

    def __init__(
        self,
        n: int,
        delay_model: DelayModel,
        omega: OmegaScript,
        crashes: Optional[Dict[int, int]] = None,
        reorder: bool = False,
        per_byte: float = 0.0,
    ):
        self.n = n
        self.delay_model = delay_model
        self.omega_script = omega
        self.crashes = dict(crashes or {})
        self.reorder = reorder
        self.per_byte = per_byte

        self.now = 0
        self.trace = Trace()
        self.actors: Dict[int, Any] = {}
        self._heap: List[Tuple[int, int, Callable[[], None]]] = []
        self._insertion = 0
        self._event_index = 0
        self._msg_seq = 0
        self._fifo_floor: Dict[Tuple[int, int], int] = {}
        self._busy_until: Dict[int, int] = {}
        self._omega_view: Dict[int, Optional[int]] = {}
        self._started = False

        omega.validate(n, self.crashes)

    # -- actors -------------------------------------------------------------

    def add_actor(self, actor_id: int, actor: Any) -> None:
        self.actors[actor_id] = actor

    def alive(self, actor_id: int, at: Optional[int] = None) -> bool:
        t = self.now if at is None else at
        crash_at = self.crashes.get(actor_id)
        return crash_at is None or t < crash_at

    # -- scheduling ---------------------------------------------------------

    def schedule(self, at: int, fn: Callable[[], None], actor: Optional[int] = None) -> int:
        if at < self.now:
            raise SchedulingError(f"cannot schedule at t={at} (now t={self.now})")
        self._insertion += 1
        handle = self._insertion

        def fire():
            if actor is not None and not self.alive(actor):
                return
            fn()

        heapq.heappush(self._heap, (at, handle, fire))
        return handle

    # -- messaging ----------------------------------------------------------

    def send(self, frm: int, to: int, msg: Any, size: int = 0) -> None:
        if not self.alive(frm):
            return
        if frm == to:
            # local self-delivery: immediate, no link traversal
            self.schedule(self.now, lambda: self._deliver(frm, to, msg), actor=to)
            return
        self._msg_seq += 1
        seq = self._msg_seq
        departure = max(self.now, self._busy_until.get(frm, 0))
        cost = int(round(size * self.per_byte))
        departure += cost
        self._busy_until[frm] = departure
        deliver_at = departure + self.delay_model.delay(seq)
        if not self.reorder:
            floor = self._fifo_floor.get((frm, to), 0)
            deliver_at = max(deliver_at, floor)
            self._fifo_floor[(frm, to)] = deliver_at
        self.schedule(deliver_at, lambda: self._deliver(frm, to, msg), actor=to)

    def _deliver(self, frm: int, to: int, msg: Any) -> None:
        actor = self.actors.get(to)
        if actor is not None:
            actor.on_message(frm, msg)

    # -- omega --------------------------------------------------------------

    def omega(self, p: int) -> int:
        return self.omega_script.output(p, self.now)

    def _install_omega_notifications(self) -> None:
        for start, _ in self.omega_script.segments:
            at = max(start, 0)
            self.schedule(at, self._notify_omega)

    def _notify_omega(self) -> None:
        for p in range(self.n):
            if p not in self.actors or not self.alive(p):
                continue
            out = self.omega_script.output(p, self.now)
            if self._omega_view.get(p) != out:
                self._omega_view[p] = out
                self.emit("omega", p, leader=out)
                handler = getattr(self.actors[p], "on_omega", None)
                if handler is not None:
                    handler(out)

    # -- trace --------------------------------------------------------------

    def emit(self, kind: str, actor: int, **data: Any) -> None:
        ev = TraceEvent(self.now, self._event_index, actor, kind, data)
        self._event_index += 1
        self.trace.append(ev)

    # -- main loop ----------------------------------------------------------

    def run(self, until: int) -> Trace:
        if not self._started:
            self._started = True
            self._install_omega_notifications()
            for p, t in sorted(self.crashes.items()):
                self.schedule(t, lambda p=p: self.emit("crash", p))
            for aid in list(self.actors):
                starter = getattr(self.actors[aid], "on_start", None)
                if starter is not None:
                    self.schedule(0, starter, actor=aid)
        while self._heap and self._heap[0][0] <= until:
            at, _, fire = heapq.heappop(self._heap)
            self.now = at
            fire()
        self.now = until
        self.trace.summary.setdefault("horizon", until)
        return self.trace
