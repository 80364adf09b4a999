"""Lamport clocks and the version stamps that totally order edits.

Every edit to an arm register carries a ``VersionStamp``; replicas resolve
concurrent edits by keeping the greatest stamp. Stamps compare as
``(lamport, actor)`` — actor ids are compared lexicographically, which for
UTF-8 strings coincides with byte order.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True, order=True, slots=True)
class VersionStamp:
    """Totally ordered edit tag: logical counter plus the editing actor."""

    lamport: int
    actor: str

    def to_json(self) -> dict:
        return {"lamport": self.lamport, "actor": self.actor}

    @classmethod
    def from_json(cls, data: dict) -> VersionStamp:
        return cls(lamport=int(data["lamport"]), actor=str(data["actor"]))


ZERO_STAMP = VersionStamp(0, "")


@dataclass(frozen=True, slots=True)
class LamportClock:
    """One actor's logical clock. Counter never decreases."""

    counter: int
    actor: str

    def to_json(self) -> dict:
        return {"counter": self.counter, "actor": self.actor}

    @classmethod
    def from_json(cls, data: dict) -> LamportClock:
        return cls(counter=int(data["counter"]), actor=str(data["actor"]))


def stamp_next(clock: LamportClock) -> tuple[LamportClock, VersionStamp]:
    """Advance the clock by one and mint a stamp for a local edit."""
    advanced = LamportClock(clock.counter + 1, clock.actor)
    return advanced, VersionStamp(advanced.counter, clock.actor)


def observe(clock: LamportClock, remote: VersionStamp) -> LamportClock:
    """Fold a remotely minted stamp into the clock (max rule, idempotent)."""
    if remote.lamport <= clock.counter:
        return clock
    return LamportClock(remote.lamport, clock.actor)
