"""Shared bits of the broadcast layers."""

from __future__ import annotations


class NotPrimaryError(Exception):
    """A broadcast was attempted by a process that is not a primary.

    Callers own the retry policy; the layers never queue rejected values.
    """


class NullDelegate:
    """Default sink for layer callbacks when no replica is attached."""

    def on_primary_change(self, primary: bool) -> None:
        pass

    def on_deliver(self, value) -> None:
        pass
