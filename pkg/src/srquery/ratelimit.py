"""Shared request pacing for the network clients."""

from __future__ import annotations

import threading
import time

__all__ = ["RateLimiter"]


class RateLimiter:
    """Spaces request grants at least 1/rate seconds apart, shared across
    threads.  ``acquire`` blocks until the caller's slot and returns the
    slot's monotonic time; no two slots are ever closer than the interval,
    so granted traffic cannot exceed the configured requests/second."""

    def __init__(self, rate: float):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.interval = 1.0 / rate
        self._lock = threading.Lock()
        self._next_allowed = 0.0

    def acquire(self) -> float:
        with self._lock:
            now = time.monotonic()
            slot = max(now, self._next_allowed)
            self._next_allowed = slot + self.interval
        wait = slot - time.monotonic()
        if wait > 0:
            time.sleep(wait)
        return slot
