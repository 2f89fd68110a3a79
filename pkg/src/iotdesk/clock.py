"""Injectable clocks.

Everything time-dependent (pools, throttles, the load harness, token issue
times) takes a clock so the whole stack runs deterministically in simulation
and on wall time in service mode.
"""

from __future__ import annotations

import time


class Clock:
    """Clock interface: milliseconds since an arbitrary epoch."""

    def now_ms(self) -> float:
        raise NotImplementedError

    def now_s(self) -> float:
        return self.now_ms() / 1000.0

    def sleep_ms(self, delta_ms: float) -> None:
        raise NotImplementedError


class SystemClock(Clock):
    """Wall clock. `now_ms` is epoch-based so token `iat` values are real."""

    def now_ms(self) -> float:
        return time.time() * 1000.0

    def sleep_ms(self, delta_ms: float) -> None:
        if delta_ms > 0:
            time.sleep(delta_ms / 1000.0)


class SimulatedClock(Clock):
    """Manually advanced clock for deterministic tests and embedded runs.

    `sleep_ms` advances the clock instead of blocking, so code written
    against `Clock` behaves identically under simulation.
    """

    def __init__(self, start_ms: float = 0.0):
        self._now_ms = float(start_ms)

    def now_ms(self) -> float:
        return self._now_ms

    def advance_ms(self, delta_ms: float) -> float:
        if delta_ms < 0:
            raise ValueError("clock cannot run backwards")
        self._now_ms += delta_ms
        return self._now_ms

    def advance_to_ms(self, t_ms: float) -> float:
        if t_ms < self._now_ms:
            raise ValueError("clock cannot run backwards")
        self._now_ms = float(t_ms)
        return self._now_ms

    def sleep_ms(self, delta_ms: float) -> None:
        if delta_ms > 0:
            self.advance_ms(delta_ms)
