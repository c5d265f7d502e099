"""Deterministic discrete-event engine.

Virtual time is integer microseconds, so event ordering is exact and a
(config, seed) pair always replays to the identical event log.  Within a
timestamp, events fire in kind order (arrival, step completion, request
finish, eviction notice) and then insertion order.
"""
from __future__ import annotations

import enum
import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

Time = int  # microseconds of virtual time

US_PER_MS = 1000


def ms(x: float) -> Time:
    """Convert milliseconds to integer virtual-time units."""
    return round(x * US_PER_MS)


def seconds(x: float) -> Time:
    return round(x * 1_000_000)


def to_ms(t: Time) -> float:
    return t / US_PER_MS


def substream(seed: int, name: str) -> random.Random:
    """Named RNG substream: adding a consumer never perturbs existing ones."""
    digest = hashlib.sha256(f"{seed}/{name}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


class EventKind(enum.IntEnum):
    # Integer value doubles as the same-timestamp tiebreak rank.
    REQUEST_ARRIVAL = 0
    STEP_COMPLETE = 1
    REQUEST_FINISHED = 2
    EVICTION_NOTICE = 3


class ScheduledInPast(Exception):
    """An event was scheduled before the current clock (a policy bug)."""


@dataclass
class Event:
    time: Time
    kind: EventKind
    payload: dict
    callback: Optional[Callable[["Event"], None]] = None
    seq: int = -1
    cancelled: bool = False

    def cancel(self) -> None:
        self.cancelled = True


class EventLog:
    """Append-only record of processed events plus per-request lifecycles."""

    def __init__(self) -> None:
        self.events: list[dict] = []
        self.lifecycle: dict[str, dict] = {}

    def append(self, record: dict) -> None:
        self.events.append(record)

    def request(self, rid: str) -> dict:
        return self.lifecycle.setdefault(rid, {"rid": rid})

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "event", **e}, sort_keys=True) for e in self.events]
        for rid in sorted(self.lifecycle):
            lines.append(json.dumps({"type": "request", **self.lifecycle[rid]}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def sha256(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode()).hexdigest()


@dataclass
class Simulator:
    seed: int
    now: Time = 0
    log: EventLog = field(default_factory=EventLog)

    def __post_init__(self) -> None:
        self._heap: list[tuple[Time, int, int, Event]] = []
        self._seq = 0
        self._boundary_checks: list[Callable[[Time], None]] = []
        self._processed = 0

    def rng(self, name: str) -> random.Random:
        return substream(self.seed, name)

    def schedule(
        self,
        time: Time,
        kind: EventKind,
        payload: dict,
        callback: Optional[Callable[[Event], None]] = None,
    ) -> Event:
        if time < self.now:
            raise ScheduledInPast(f"event at t={time} scheduled while clock is {self.now}")
        ev = Event(time=time, kind=kind, payload=payload, callback=callback, seq=self._seq)
        self._seq += 1
        heapq.heappush(self._heap, (time, int(kind), ev.seq, ev))
        return ev

    def add_boundary_check(self, fn: Callable[[Time], None]) -> None:
        """fn(t) runs after the last event of each distinct timestamp."""
        self._boundary_checks.append(fn)

    def _run_checks(self) -> None:
        for fn in self._boundary_checks:
            fn(self.now)

    def _process(self, ev: Event) -> None:
        if ev.time > self.now:
            if self._processed:
                self._run_checks()
            self.now = ev.time
        self._processed += 1
        self.log.append({"t": ev.time, "seq": ev.seq, "kind": ev.kind.name, **ev.payload})
        if ev.callback is not None:
            ev.callback(ev)

    def run_until(self, t_end: Time) -> EventLog:
        """Process all events with time <= t_end; clock ends at t_end."""
        while self._heap and self._heap[0][0] <= t_end:
            _, _, _, ev = heapq.heappop(self._heap)
            if ev.cancelled:
                continue
            self._process(ev)
        if self._processed:
            self._run_checks()
        self.now = max(self.now, t_end)
        return self.log

    def run_to_completion(self, t_cap: Time) -> EventLog:
        """Drain the queue; raises if the clock would pass t_cap (runaway run)."""
        while self._heap:
            if self._heap[0][0] > t_cap:
                raise RuntimeError(f"simulation exceeded time cap {t_cap}")
            _, _, _, ev = heapq.heappop(self._heap)
            if ev.cancelled:
                continue
            self._process(ev)
        if self._processed:
            self._run_checks()
        return self.log
