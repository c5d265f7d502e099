"""Measurements and theorem verifiers: Jain's index, percentile latencies,
cache-hit rate, backlog timelines, and the service/latency bound checkers.

All functions are pure over a finished run.  A failed bound report for a
deficit-based policy on valid preconditions indicates an implementation
bug, not an experimental outcome.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .accounting import ServiceLog
from .engine import Time

Interval = tuple[Time, Time]


def jain_index(values: list[float]) -> float:
    """(sum x)^2 / (n * sum x^2); requires at least one positive value."""
    if not values or all(v == 0 for v in values):
        raise ValueError("jain index undefined for all-zero allocations")
    if any(v < 0 for v in values):
        raise ValueError("allocations must be non-negative")
    s = sum(values)
    return (s * s) / (len(values) * sum(v * v for v in values))


def percentile_latency(values: list[float], p: float) -> float:
    """Nearest-rank percentile."""
    if not values:
        raise ValueError("no latencies")
    if not 0 < p <= 100:
        raise ValueError("p must be in (0, 100]")
    ordered = sorted(values)
    rank = max(1, math.ceil(p / 100 * len(ordered)))
    return ordered[rank - 1]


# -- interval machinery -------------------------------------------------


def intervals_from_deltas(deltas: dict[Time, int]) -> list[Interval]:
    out: list[Interval] = []
    count = 0
    start: Optional[Time] = None
    for t in sorted(deltas):
        count += deltas[t]
        if count > 0 and start is None:
            start = t
        elif count <= 0 and start is not None:
            if t > start:
                out.append((start, t))
            start = None
    assert start is None, "pending count never returned to zero"
    return out


def intersect_intervals(a: list[Interval], b: list[Interval]) -> list[Interval]:
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if lo < hi:
            out.append((lo, hi))
        if a[i][1] <= b[j][1]:
            i += 1
        else:
            j += 1
    return out


def merge_intervals(intervals: list[Interval]) -> list[Interval]:
    out: list[Interval] = []
    for lo, hi in sorted(intervals):
        if out and lo <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return out


def window_grid(t1: Time, t2: Time, divisions: int = 4) -> list[Interval]:
    """The window itself plus all aligned subwindows of a coarse grid."""
    bounds = [t1 + (t2 - t1) * i // divisions for i in range(divisions + 1)]
    out = []
    for i in range(len(bounds)):
        for j in range(i + 1, len(bounds)):
            if bounds[i] < bounds[j]:
                out.append((bounds[i], bounds[j]))
    return out


def backlogged_intervals(lifecycle: dict[str, dict], client: str, run_end: Time) -> list[Interval]:
    """Maximal intervals during which the client has pending (arrived but
    not yet admitted) requests."""
    deltas: dict[Time, int] = {}
    for rec in lifecycle.values():
        if rec.get("client") != client or "arrival_time" not in rec:
            continue
        arr = rec["arrival_time"]
        adm = rec.get("admit_time", run_end)
        if adm > arr:
            deltas[arr] = deltas.get(arr, 0) + 1
            deltas[adm] = deltas.get(adm, 0) - 1
    return intervals_from_deltas(deltas)


# -- bound reports ------------------------------------------------------


@dataclass
class BoundReport:
    theorem: str
    measured: float
    bound: float
    applicable: bool = True
    guaranteed: bool = True  # policy carries this bound; failure is a bug
    detail: str = ""

    @property
    def margin(self) -> float:
        return self.bound - self.measured

    @property
    def passed(self) -> bool:
        return (not self.applicable) or self.measured <= self.bound

    def row(self) -> dict:
        return {
            "theorem": self.theorem,
            "measured": self.measured,
            "bound": self.bound,
            "margin": self.margin,
            "applicable": self.applicable,
            "guaranteed": self.guaranteed,
            "passed": self.passed,
            "detail": self.detail,
        }


def _clients_of(lifecycle: dict[str, dict]) -> list[str]:
    return sorted({rec["client"] for rec in lifecycle.values() if "client" in rec})


def verify_service_bound_pairwise(
    service: ServiceLog,
    lifecycle: dict[str, dict],
    bound: float,
    run_end: Time,
    theorem: str,
    guaranteed: bool = True,
) -> BoundReport:
    """Worst |W_f - W_g| over all client pairs and all windows where both
    are continuously backlogged."""
    clients = _clients_of(lifecycle)
    backlogs = {c: backlogged_intervals(lifecycle, c, run_end) for c in clients}
    worst = -1.0
    detail = "no common backlogged window"
    for i, f in enumerate(clients):
        for g in clients[i + 1 :]:
            for lo, hi in intersect_intervals(backlogs[f], backlogs[g]):
                for t1, t2 in window_grid(lo, hi):
                    wf = service.service_in_interval(f, t1, t2)
                    wg = service.service_in_interval(g, t1, t2)
                    gap = abs(wf - wg)
                    if gap > worst:
                        worst = gap
                        detail = f"{f} vs {g} on [{t1},{t2})"
    if worst < 0:
        return BoundReport(theorem, 0.0, bound, applicable=False, guaranteed=guaranteed, detail=detail)
    return BoundReport(theorem, worst, bound, guaranteed=guaranteed, detail=detail)


def verify_service_bound_vs_nonbacklogged(
    service: ServiceLog,
    lifecycle: dict[str, dict],
    bound: float,
    run_end: Time,
    theorem: str,
    guaranteed: bool = True,
) -> BoundReport:
    """Worst W_g - W_f where f is continuously backlogged on the window."""
    clients = _clients_of(lifecycle)
    backlogs = {c: backlogged_intervals(lifecycle, c, run_end) for c in clients}
    worst = None
    detail = "no backlogged window"
    for f in clients:
        for lo, hi in backlogs[f]:
            for t1, t2 in window_grid(lo, hi):
                wf = service.service_in_interval(f, t1, t2)
                for g in clients:
                    if g == f:
                        continue
                    gap = service.service_in_interval(g, t1, t2) - wf
                    if worst is None or gap > worst:
                        worst = gap
                        detail = f"{g} over backlogged {f} on [{t1},{t2})"
    if worst is None:
        return BoundReport(theorem, 0.0, bound, applicable=False, guaranteed=guaranteed, detail=detail)
    return BoundReport(theorem, worst, bound, guaranteed=guaranteed, detail=detail)


def verify_global_max_min(
    service: ServiceLog,
    lifecycle: dict[str, dict],
    bound: float,
    run_end: Time,
    theorem: str,
    guaranteed: bool = True,
) -> BoundReport:
    """Max-min service gap over clients backlogged through a common window."""
    clients = _clients_of(lifecycle)
    backlogs = {c: backlogged_intervals(lifecycle, c, run_end) for c in clients}
    worst = None
    detail = "fewer than 2 clients ever co-backlogged"
    for i, f in enumerate(clients):
        for g in clients[i + 1 :]:
            for lo, hi in intersect_intervals(backlogs[f], backlogs[g]):
                for t1, t2 in window_grid(lo, hi):
                    members = [
                        c
                        for c in clients
                        if any(a <= t1 and t2 <= b for a, b in backlogs[c])
                    ]
                    if len(members) < 2:
                        continue
                    values = [service.service_in_interval(c, t1, t2) for c in members]
                    gap = max(values) - min(values)
                    if worst is None or gap > worst:
                        worst = gap
                        detail = f"clients {members} on [{t1},{t2})"
    if worst is None:
        return BoundReport(theorem, 0.0, bound, applicable=False, guaranteed=guaranteed, detail=detail)
    return BoundReport(theorem, worst, bound, guaranteed=guaranteed, detail=detail)


def local_latency_units(n_clients: int, U: int, q_u: int) -> int:
    """Service-unit numerator of the single-worker dispatch-delay bound."""
    return 2 * (n_clients - 1) * (q_u + U)


def global_latency_units(n_clients: int, n_workers: int, U: int, q_w: int) -> int:
    """Service-unit numerator of the multi-worker dispatch-delay bound."""
    return (n_clients - 1) * n_workers * (2 * U + 2 * q_w)


def measure_capacity_floor(
    service: ServiceLog,
    busy_union: list[Interval],
    window: Time,
) -> Optional[float]:
    """Lower bound on server capacity: minimum observed actual service per
    microsecond over busy windows of the configured width."""
    import bisect

    events = sorted((ev.time, ev.units) for ev in service.all_events)
    if not events or not busy_union:
        return None
    times = [t for t, _ in events]
    cum = [0]
    for _, u in events:
        cum.append(cum[-1] + u)

    def units_in(t1: Time, t2: Time) -> int:
        return cum[bisect.bisect_left(times, t2)] - cum[bisect.bisect_left(times, t1)]

    rates: list[float] = []
    step = max(1, window // 2)
    for lo, hi in busy_union:
        if hi - lo < window:
            continue
        starts = list(range(lo, hi - window + 1, step))
        if starts[-1] != hi - window:
            starts.append(hi - window)
        rates.extend(units_in(s, s + window) / window for s in starts)
    if not rates:
        lo, hi = max(busy_union, key=lambda iv: iv[1] - iv[0])
        if hi == lo:
            return None
        rates.append(units_in(lo, hi) / (hi - lo))
    floor = min(rates)
    return floor if floor > 0 else None


def verify_latency_bound(
    service: ServiceLog,
    lifecycle: dict[str, dict],
    busy_union: list[Interval],
    n_clients: int,
    bound_units: float,
    window: Time,
    theorem: str,
    guaranteed: bool = True,
) -> BoundReport:
    """Dispatch delay of fresh-client probes vs bound_units / a."""
    clients = _clients_of(lifecycle)
    per_client: dict[str, list[dict]] = {c: [] for c in clients}
    for rec in lifecycle.values():
        if "arrival_time" in rec:
            per_client[rec["client"]].append(rec)
    qualifying: list[tuple[str, Time, Time]] = []
    for c, recs in per_client.items():
        for rec in recs:
            if "admit_time" not in rec:
                continue
            t = rec["arrival_time"]
            fresh = True
            for other in recs:
                if other is rec or "arrival_time" not in other:
                    continue
                oa = other["arrival_time"]
                oadm = other.get("admit_time")
                ofin = other.get("finish_time")
                if oa <= t and (oadm is None or oadm > t):
                    fresh = False  # pending at arrival
                    break
                if oadm is not None and oadm <= t and (ofin is None or ofin > t):
                    fresh = False  # running at arrival
                    break
            if fresh:
                qualifying.append((rec["rid"], t, rec["admit_time"]))
    if not qualifying or n_clients < 2:
        return BoundReport(
            theorem, 0.0, float("inf"), applicable=False, guaranteed=guaranteed, detail="no qualifying probes"
        )
    a = measure_capacity_floor(service, busy_union, window)
    if a is None:
        return BoundReport(
            theorem, 0.0, float("inf"), applicable=False, guaranteed=guaranteed, detail="capacity floor unmeasurable"
        )
    bound_us = bound_units / a
    worst_rid, _, _ = max(qualifying, key=lambda q: q[2] - q[1])
    worst = max(adm - arr for _, arr, adm in qualifying)
    return BoundReport(
        theorem,
        float(worst),
        bound_us,
        guaranteed=guaranteed,
        detail=f"{len(qualifying)} probes, a={a:.6g} units/us, worst={worst_rid}",
    )


def cache_hit_rate(lifecycle: dict[str, dict]) -> float:
    matched = sum(rec.get("match_len", 0) for rec in lifecycle.values() if "admit_time" in rec)
    total = sum(rec.get("input_len", 0) for rec in lifecycle.values() if "admit_time" in rec)
    return matched / total if total else 0.0


def all_active_window(lifecycle: dict[str, dict]) -> Optional[Interval]:
    """[latest first arrival, earliest last finish] across clients."""
    first: dict[str, Time] = {}
    last: dict[str, Time] = {}
    for rec in lifecycle.values():
        if "arrival_time" not in rec:
            continue
        c = rec["client"]
        first[c] = min(first.get(c, rec["arrival_time"]), rec["arrival_time"])
        end = rec.get("finish_time", rec["arrival_time"])
        last[c] = max(last.get(c, end), end)
    if not first:
        return None
    lo = max(first.values())
    hi = min(last.values())
    return (lo, hi) if lo < hi else None
