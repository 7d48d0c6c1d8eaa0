"""Injectable time sources. Library code never reads the wall clock."""

from __future__ import annotations

import time
from typing import Protocol


class Clock(Protocol):
    def now(self) -> int: ...


class FixedClock:
    """Manually driven clock. ``calls`` counts reads so tests can observe use."""

    def __init__(self, start: int = 1_750_000_000) -> None:
        self._now = int(start)
        self.calls = 0

    def now(self) -> int:
        self.calls += 1
        return self._now

    def set(self, t: int) -> None:
        self._now = int(t)

    def advance(self, seconds: int) -> int:
        self._now += int(seconds)
        return self._now


class SystemClock:
    def now(self) -> int:
        return int(time.time())
