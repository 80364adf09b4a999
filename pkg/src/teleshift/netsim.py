"""Seeded network impairment and a deterministic discrete-event clock.

All randomness flows from NetProfile.seed, so identical profiles replay
identical delivery schedules and drop patterns.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass
from typing import Any, Callable


@dataclass(frozen=True, slots=True)
class NetProfile:
    latency_ms: float = 0.0
    jitter_ms: float = 0.0
    drop_prob: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.latency_ms < 0 or self.jitter_ms < 0:
            raise ValueError("latency and jitter must be non-negative")
        # 1.0 (total blackout) is allowed so timeout behaviour stays testable
        if not (0.0 <= self.drop_prob <= 1.0):
            raise ValueError("drop_prob must be in [0, 1]")

    @classmethod
    def parse(cls, text: str) -> NetProfile:
        """Parse the CLI form "latency,jitter,drop,seed"."""
        parts = text.split(",")
        if len(parts) != 4:
            raise ValueError("expected latency,jitter,drop,seed")
        return cls(float(parts[0]), float(parts[1]), float(parts[2]), int(parts[3]))

    def brief(self) -> str:
        return f"{self.latency_ms:g},{self.jitter_ms:g},{self.drop_prob:g},{self.seed}"


LOSSLESS = NetProfile()


class ImpairedLink:
    """One direction of one connection through the impaired network.

    ``salt`` decorrelates links sharing a profile; with salt None the stream
    is exactly ``random.Random(profile.seed)``.
    """

    def __init__(self, profile: NetProfile, salt: str | None = None):
        self.profile = profile
        self.rng = random.Random(
            profile.seed if salt is None else f"{profile.seed}/{salt}"
        )
        self.dropped = 0
        self.sent = 0

    def impair(self) -> float | None:
        """Delay in ms for the next message, or None when it drops."""
        self.sent += 1
        profile = self.profile
        if profile.drop_prob > 0.0 and self.rng.random() < profile.drop_prob:
            self.dropped += 1
            return None
        delay = profile.latency_ms
        if profile.jitter_ms > 0.0:
            delay += self.rng.uniform(-profile.jitter_ms, profile.jitter_ms)
        return max(delay, 0.0)


class EventQueue:
    """Deterministic virtual-time event heap (FIFO among equal timestamps)."""

    def __init__(self) -> None:
        self.now = 0.0
        self._heap: list[tuple[float, int, Callable[[], Any]]] = []
        self._tie = 0

    def schedule(self, delay_ms: float, action: Callable[[], Any]) -> None:
        self._tie += 1
        heapq.heappush(self._heap, (self.now + max(delay_ms, 0.0), self._tie, action))

    def schedule_at(self, at_ms: float, action: Callable[[], Any]) -> None:
        self._tie += 1
        heapq.heappush(self._heap, (max(at_ms, self.now), self._tie, action))

    def __len__(self) -> int:
        return len(self._heap)

    def step(self) -> bool:
        """Run the next event; False when the heap is empty."""
        if not self._heap:
            return False
        at, _, action = heapq.heappop(self._heap)
        self.now = at
        action()
        return True
