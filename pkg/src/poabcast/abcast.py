"""Plain atomic broadcast dressed up as a primary-order interface.

This is the deliberately weak control variant: a process calls itself a
primary whenever the leader oracle points at it, with no barrier and no
epoch tagging on values. If a proposal loses its instance to someone
else's value, the still-leading process simply re-proposes it at its next
free instance. Total order and agreement hold, but nothing ties delivered
values to the primary epoch that produced them - which is exactly the gap
the stronger layers close.
"""

from __future__ import annotations

from typing import Any, Dict, Optional

from .broadcast import NotPrimaryError, NullDelegate
from .paxos import PaxosNode
from .sim import Simulator
from .values import Noop, describe


class NaiveAbcast:
    def __init__(self, sim: Simulator, pid: int, n: int):
        self.sim = sim
        self.pid = pid
        self.n = n
        self.paxos = PaxosNode(sim, pid, n, deliver=self.on_decide)
        self.delegate = NullDelegate()
        self.leader: Optional[int] = None
        self._primary = False
        self.prop = 0
        self.dec = 0
        self.outstanding: Dict[int, Any] = {}  # instance -> our undecided value

    def is_primary(self) -> bool:
        return self.leader == self.pid

    # -- oracle -------------------------------------------------------------

    def on_omega(self, leader: int) -> None:
        prev = self.leader
        self.leader = leader
        if leader == self.pid and prev != self.pid:
            self.paxos.ensure_leadership()
        elif leader != self.pid and prev == self.pid:
            self.outstanding.clear()
            self.paxos.relinquish()
        self._refresh()

    # -- consensus decisions ----------------------------------------------------

    def on_decide(self, value: Any, instance: int) -> None:
        self.dec = instance
        if not isinstance(value, Noop):
            self.sim.emit("deliver", self.pid, instance=instance, value=describe(value))
            self.delegate.on_deliver(value)
        mine = self.outstanding.pop(instance, None)
        if mine is not None and mine != value and self.leader == self.pid:
            # lost the instance; move our value to the next free one
            self.prop = max(self.prop + 1, self.dec + 1)
            self.outstanding[self.prop] = mine
            self.sim.emit(
                "reproposed", self.pid, instance=self.prop, value=describe(mine)
            )
            self.paxos.propose(mine, self.prop)

    # -- broadcasting ---------------------------------------------------------------

    def poabcast(self, value: Any) -> None:
        if not self.is_primary():
            raise NotPrimaryError(f"process {self.pid} is not a primary")
        self.prop = max(self.prop + 1, self.dec + 1)
        self.outstanding[self.prop] = value
        self.sim.emit("broadcast", self.pid, instance=self.prop, value=describe(value))
        self.paxos.propose(value, self.prop)

    # -- primary bookkeeping -----------------------------------------------------------

    def _refresh(self) -> None:
        cur = self.is_primary()
        if cur == self._primary:
            return
        self._primary = cur
        self.sim.emit("primary-begin" if cur else "primary-end", self.pid)
        self.delegate.on_primary_change(cur)

    # -- simulator plumbing -------------------------------------------------------------

    def on_message(self, frm: int, msg: Any) -> None:
        self.paxos.on_message(frm, msg)
