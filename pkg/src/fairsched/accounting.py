"""Service measurement: the weighted extend/output cost function and ledger."""
from __future__ import annotations

import bisect
from dataclasses import dataclass

from .engine import Time
from .requests import SystemParams


@dataclass(frozen=True)
class CostWeights:
    w_e: int = 1
    w_q: int = 2

    def __post_init__(self) -> None:
        if self.w_e < 0 or self.w_q < 0:
            raise ValueError("weights must be non-negative")


def compute_U(params: SystemParams) -> int:
    """Maximum service a single request can consume."""
    return params.w_e * params.L_input + params.w_q * params.M


@dataclass
class ServiceEvent:
    time: Time
    client: str
    kind: str  # "extend" | "output"
    units: int  # actual service (extend tokens for prefill)
    client_units: int  # client-perspective service (full input tokens)


class ServiceLog:
    """Per-client time-stamped service increments.

    Extend-token service is ledgered at admission; output-token service at
    each decode step's completion, matching deficit-counter granularity.
    """

    def __init__(self, weights: CostWeights):
        self.weights = weights
        self._events: dict[str, list[ServiceEvent]] = {}
        self._times: dict[str, list[Time]] = {}
        self.all_events: list[ServiceEvent] = []

    def clients(self) -> list[str]:
        return sorted(self._events)

    def add_extend(self, time: Time, client: str, extend_tokens: int, input_tokens: int) -> None:
        self._add(
            ServiceEvent(
                time,
                client,
                "extend",
                self.weights.w_e * extend_tokens,
                self.weights.w_e * input_tokens,
            )
        )

    def add_output(self, time: Time, client: str, output_tokens: int) -> None:
        units = self.weights.w_q * output_tokens
        self._add(ServiceEvent(time, client, "output", units, units))

    def _add(self, ev: ServiceEvent) -> None:
        if ev.units < 0 or ev.client_units < 0:
            raise ValueError("service increments must be non-negative")
        lst = self._events.setdefault(ev.client, [])
        if lst and ev.time < lst[-1].time:
            raise ValueError("service events must be time-ordered")
        lst.append(ev)
        self._times.setdefault(ev.client, []).append(ev.time)
        self.all_events.append(ev)

    def _slice(self, client: str, t1: Time, t2: Time) -> list[ServiceEvent]:
        if t1 > t2:
            raise ValueError("t1 must be <= t2")
        times = self._times.get(client, [])
        lo = bisect.bisect_left(times, t1)
        hi = bisect.bisect_left(times, t2)
        return self._events.get(client, [])[lo:hi]

    def service_in_interval(self, client: str, t1: Time, t2: Time) -> int:
        """Actual service W received by client during [t1, t2)."""
        return sum(ev.units for ev in self._slice(client, t1, t2))

    def client_perspective_service(self, client: str, t1: Time, t2: Time) -> int:
        """Like service_in_interval but counting full input tokens."""
        return sum(ev.client_units for ev in self._slice(client, t1, t2))

    def totals(self) -> dict[str, int]:
        return {c: self.service_in_interval(c, 0, 1 << 62) for c in self.clients()}

    def to_csv(self) -> str:
        lines = ["time,client,kind,units,client_units"]
        for ev in self.all_events:
            lines.append(f"{ev.time},{ev.client},{ev.kind},{ev.units},{ev.client_units}")
        return "\n".join(lines) + "\n"
