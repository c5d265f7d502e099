"""Per-worker admission policies: DLPM, LPM, VTC, FCFS.

A policy owns its counter state and decides which queued requests enter the
running batch; the worker owns memory admission (can_add) and exposes
try_admit.  Policies only ever see request identity, client, arrival and
cached-prefix information, never output lengths.
"""
from __future__ import annotations

from typing import Callable, Optional

from .requests import Request


def lpm_order(queue: list[Request], match_len: Callable[[Request], int]) -> list[Request]:
    """Sort by matched prefix length descending; ties by arrival, then id."""
    return sorted(queue, key=lambda r: (-match_len(r), r.arrival, r.rid))


class LocalPolicy:
    name = "base"

    def __init__(self) -> None:
        self.worker = None  # set by Worker.attach

    def attach(self, worker) -> None:
        self.worker = worker

    def on_request_enqueued(self, req: Request, was_active: bool) -> None:
        pass

    def fill(self) -> None:
        raise NotImplementedError

    def on_outputs(self, counts: dict[str, int]) -> None:
        pass

    def counters(self) -> Optional[dict[str, int]]:
        return None

    # shared helper: keep admitting passes until a full pass admits nothing
    def _admit_passes(self, order: list[Request], gate: Callable[[Request], bool], admitted_cb) -> None:
        pending = list(order)
        while pending:
            progress = False
            for r in list(pending):
                if not gate(r):
                    continue
                entry = self.worker.try_admit(r)
                if entry is not None:
                    pending.remove(r)
                    progress = True
                    admitted_cb(r, entry)
            if not progress:
                break


class Fcfs(LocalPolicy):
    name = "fcfs"

    def fill(self) -> None:
        order = sorted(self.worker.queue, key=lambda r: (r.arrival, r.rid))
        self._admit_passes(order, lambda r: True, lambda r, e: None)


class Lpm(LocalPolicy):
    name = "lpm"

    def fill(self) -> None:
        order = lpm_order(self.worker.queue, self.worker.match_len)
        self._admit_passes(order, lambda r: True, lambda r, e: None)


class Dlpm(LocalPolicy):
    """Deficit-gated LPM: admissions spend per-client quantum credit."""

    name = "dlpm"

    def __init__(self, quantum: int):
        super().__init__()
        if quantum <= 0:
            raise ValueError("quantum must be positive")
        self.quantum = quantum
        self.q: dict[str, int] = {}
        self.client_list: list[str] = []
        self.refill_counts: dict[str, int] = {}

    def on_request_enqueued(self, req: Request, was_active: bool) -> None:
        if req.client not in self.q:
            self.q[req.client] = 0
            self.refill_counts[req.client] = 0
            self.client_list.append(req.client)

    def check_refill(self, queued_clients) -> bool:
        """Refill everyone at or below zero, but only once no queued client
        still holds positive credit.  Returns whether a refill happened."""
        if not queued_clients:
            return False
        for i in queued_clients:
            if self.q[i] > 0:
                return False
        for i in self.client_list:
            if self.q[i] <= 0:
                self.q[i] += self.quantum
                self.refill_counts[i] += 1
        return True

    def fill(self) -> None:
        w = self.worker
        w_e = w.weights.w_e
        pending = lpm_order(w.queue, w.match_len)
        while pending:
            progress = False
            for r in list(pending):
                i = r.client
                # a deeply indebted client may need several quanta; keep
                # refilling while no queued client holds credit
                while self.q[i] <= 0:
                    if not self.check_refill({p.client for p in pending}):
                        break
                if self.q[i] > 0:
                    entry = w.try_admit(r)
                    if entry is not None:
                        self.q[i] -= w_e * entry.extend_total
                        pending.remove(r)
                        progress = True
            if not progress:
                break

    def on_outputs(self, counts: dict[str, int]) -> None:
        w_q = self.worker.weights.w_q
        for client, n in counts.items():
            self.q[client] -= w_q * n

    def counters(self) -> dict[str, int]:
        return dict(self.q)


class Vtc(LocalPolicy):
    """Virtual token counter baseline: serve the least-served active client.

    A client joining (or rejoining after going idle) has its counter lifted
    to the minimum over currently active clients so idle time never
    accumulates spendable credit.
    """

    name = "vtc"

    def __init__(self) -> None:
        super().__init__()
        self.counter: dict[str, int] = {}

    def _active_clients(self) -> set[str]:
        w = self.worker
        active = {r.client for r in w.queue}
        active.update(e.request.client for e in w.batch.values())
        return active

    def on_request_enqueued(self, req: Request, was_active: bool) -> None:
        i = req.client
        if not was_active:
            others = self._active_clients() - {i}
            known = [self.counter[j] for j in others if j in self.counter]
            lift = min(known) if known else 0
            self.counter[i] = max(self.counter.get(i, 0), lift)
        else:
            self.counter.setdefault(i, 0)

    def fill(self) -> None:
        w = self.worker
        w_e = w.weights.w_e
        while True:
            queued: dict[str, list[Request]] = {}
            for r in w.queue:
                queued.setdefault(r.client, []).append(r)
            admitted = False
            for client in sorted(queued, key=lambda c: (self.counter[c], c)):
                head = min(queued[client], key=lambda r: (r.arrival, r.rid))
                entry = w.try_admit(head)
                if entry is not None:
                    # VTC is cache-oblivious: it charges the full input
                    # regardless of how much of it was already cached
                    self.counter[client] += w_e * entry.request.input_len
                    admitted = True
                    break
            if not admitted:
                break

    def on_outputs(self, counts: dict[str, int]) -> None:
        w_q = self.worker.weights.w_q
        for client, n in counts.items():
            self.counter[client] = self.counter.get(client, 0) + w_q * n

    def counters(self) -> dict[str, int]:
        return dict(self.counter)


def make_local_policy(name: str, quantum: Optional[int] = None) -> LocalPolicy:
    if name == "dlpm":
        if quantum is None:
            raise ValueError("dlpm requires a quantum")
        return Dlpm(quantum)
    if name == "lpm":
        return Lpm()
    if name == "vtc":
        return Vtc()
    if name == "fcfs":
        return Fcfs()
    raise ValueError(f"unknown local policy {name!r}")
