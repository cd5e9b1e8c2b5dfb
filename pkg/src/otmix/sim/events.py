"""Virtual clock and deterministic event queue.

Events execute in (time, priority, sequence) order; two runs fed the
same seed produce bit-identical schedules.  Transport deliveries use
priority 0 and timers priority 1, so a message arriving at the same
instant as a timer is processed first.
"""

from __future__ import annotations

import heapq
from typing import Callable, List, Tuple

__all__ = ["Simulator", "PRIORITY_DELIVERY", "PRIORITY_TIMER"]

PRIORITY_DELIVERY = 0
PRIORITY_TIMER = 1


class Simulator:
    def __init__(self):
        self.now_ms = 0
        self._heap: List[Tuple[int, int, int, Callable[[], None]]] = []
        self._seq = 0

    def schedule_at(self, t_ms: int, fn: Callable[[], None], priority: int = PRIORITY_TIMER) -> None:
        if t_ms < self.now_ms:
            t_ms = self.now_ms
        self._seq += 1
        heapq.heappush(self._heap, (t_ms, priority, self._seq, fn))

    def schedule_in(self, delay_ms: int, fn: Callable[[], None], priority: int = PRIORITY_TIMER) -> None:
        self.schedule_at(self.now_ms + max(0, int(delay_ms)), fn, priority)

    def run_until(self, t_end_ms: int) -> None:
        """Execute every event with time <= t_end_ms."""
        while self._heap and self._heap[0][0] <= t_end_ms:
            t, _, _, fn = heapq.heappop(self._heap)
            self.now_ms = t
            fn()
        self.now_ms = max(self.now_ms, t_end_ms)

    def step(self) -> bool:
        if not self._heap:
            return False
        t, _, _, fn = heapq.heappop(self._heap)
        self.now_ms = t
        fn()
        return True

    @property
    def pending(self) -> int:
        return len(self._heap)
