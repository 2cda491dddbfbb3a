"""Deterministic discrete-event loop. Time is integer microseconds."""

from __future__ import annotations

import enum
import heapq
from typing import Any, Callable, NamedTuple

SimTime = int


class EventKind(enum.IntEnum):
    PACKET_ARRIVAL = 0
    LINK_DEPARTURE = 1
    TIMER_EXPIRY = 2
    APP_SEND = 3
    CONTROL = 4


class SimEvent(NamedTuple):
    time: SimTime
    seqno: int
    kind: EventKind
    fn: Callable[[Any], None]
    arg: Any


class CausalityError(RuntimeError):
    pass


class SimulationDeadlock(RuntimeError):
    pass


class Simulator:
    """Min-heap of events ordered by (time, insertion counter)."""

    def __init__(self):
        self.now: SimTime = 0
        self._heap: list[SimEvent] = []
        self._seqno = 0
        self.processed = 0
        self.describe: Callable[[], str] | None = None

    def schedule(self, time: SimTime, fn: Callable, arg: Any = None, kind: EventKind = EventKind.PACKET_ARRIVAL) -> None:
        if time < self.now:
            raise CausalityError(f"event at {time} scheduled from {self.now}")
        self._seqno += 1
        heapq.heappush(self._heap, SimEvent(time, self._seqno, kind, fn, arg))

    def pending(self) -> list[SimEvent]:
        return sorted(self._heap)

    def run(self, until: SimTime) -> None:
        heap = self._heap
        pop = heapq.heappop
        n = 0
        while heap and heap[0][0] <= until:
            ev = pop(heap)
            self.now = ev[0]
            ev[3](ev[4])
            n += 1
        self.processed += n
        if not heap and self.now < until:
            state = self.describe() if self.describe else "no state available"
            raise SimulationDeadlock(f"event queue empty at t={self.now}us before end {until}us; {state}")
        self.now = max(self.now, until)
