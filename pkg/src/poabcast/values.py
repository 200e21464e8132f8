"""Broadcast payloads and the protocol-level wrappers around them.

Application values are opaque to the broadcast layers; the wrappers
(skip, no-op, NEW-EPOCH, VAL, batches) are what the protocols agree on.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Tuple


@dataclass(frozen=True)
class AppValue:
    """An opaque application payload with a run-unique identity."""

    vid: str
    body: str = ""
    size: int = 0
    meta: tuple = ()  # optional (key, value) pairs, e.g. client id / seqno

    def digest(self) -> str:
        h = hashlib.sha256(f"{self.vid}|{self.body}".encode()).hexdigest()
        return h[:12]


@dataclass(frozen=True)
class Batch:
    """Several application values agreed on in a single consensus instance."""

    items: Tuple[AppValue, ...]

    def digest(self) -> str:
        h = hashlib.sha256("|".join(v.digest() for v in self.items).encode())
        return "b" + h.hexdigest()[:11]

    @property
    def size(self) -> int:
        return sum(v.size for v in self.items)


@dataclass(frozen=True)
class Skip:
    """Closes the instance gap [dec+1, target] without delivering values."""

    target: int

    def digest(self) -> str:
        return f"skip({self.target})"


@dataclass(frozen=True)
class Noop:
    """Reserved consensus filler value, invisible to the broadcast layer."""

    def digest(self) -> str:
        return "noop"


NOOP = Noop()


@dataclass(frozen=True)
class NewEpoch:
    """Primary-election payload of the barrier-free protocol."""

    epoch: int

    def digest(self) -> str:
        return f"new-epoch({self.epoch})"


@dataclass(frozen=True)
class ValTuple:
    """Value broadcast of the barrier-free protocol: payload + epoch + seqno."""

    value: AppValue | Batch
    epoch: int
    seqno: int

    def digest(self) -> str:
        return f"val({self.value.digest()},{self.epoch},{self.seqno})"


def payload_size(value) -> int:
    """Billable byte size of a consensus payload for the cost model."""
    if isinstance(value, (AppValue, Batch)):
        return value.size
    if isinstance(value, ValTuple):
        return payload_size(value.value)
    return 0


def describe(value) -> str:
    """Stable, short textual identity used in traces."""
    return value.digest()


def inner_digest(value):
    """Digest of the application payload inside a consensus value, if any."""
    if isinstance(value, (AppValue, Batch)):
        return value.digest()
    if isinstance(value, ValTuple):
        return inner_digest(value.value)
    return None
