"""Dispatch policies for the multi-worker setting.

The global scheduler is one event-handler context processing arrivals,
finishes and eviction notices strictly in virtual-time order, so the
concurrent bookkeeping streams serialize deterministically.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .accounting import CostWeights
from .engine import Time
from .radix import RadixTree
from .requests import Request, TokenSeq


@dataclass
class DispatchRecord:
    rid: str
    client: str
    worker: int
    match_len: int
    matched_workers: tuple[int, ...]
    time: Time


class Dispatcher:
    name = "base"
    uses_global_tree = False

    def __init__(self, worker_ids: list[int]):
        self.worker_ids = list(worker_ids)
        self.queue_size: dict[int, int] = {w: 0 for w in worker_ids}
        self.records: list[DispatchRecord] = []

    def select(self, req: Request, now: Time) -> tuple[int, int, set[int]]:
        raise NotImplementedError

    def dispatch(self, req: Request, now: Time) -> DispatchRecord:
        wid, match_len, matched = self.select(req, now)
        self.queue_size[wid] += 1
        rec = DispatchRecord(req.rid, req.client, wid, match_len, tuple(sorted(matched)), now)
        self.records.append(rec)
        self.after_dispatch(req, wid, now)
        return rec

    def after_dispatch(self, req: Request, wid: int, now: Time) -> None:
        pass

    def on_finish(self, client: str, worker: int, output_tokens: int, now: Time) -> None:
        self.queue_size[worker] -= 1

    def on_eviction(self, path: TokenSeq, keep_len: int, worker: int, notice_time: Time, now: Time) -> None:
        pass

    def _min_queue(self, candidates) -> int:
        return min(candidates, key=lambda w: (self.queue_size[w], w))


class RoundRobin(Dispatcher):
    name = "rr"

    def __init__(self, worker_ids: list[int]):
        super().__init__(worker_ids)
        self._cursor = 0

    def select(self, req: Request, now: Time) -> tuple[int, int, set[int]]:
        wid = self.worker_ids[self._cursor % len(self.worker_ids)]
        self._cursor += 1
        return wid, 0, set()


class PerClientRoundRobin(Dispatcher):
    name = "per_client_rr"

    def __init__(self, worker_ids: list[int]):
        super().__init__(worker_ids)
        self._cursors: dict[str, int] = {}

    def select(self, req: Request, now: Time) -> tuple[int, int, set[int]]:
        cur = self._cursors.get(req.client, 0)
        wid = self.worker_ids[cur % len(self.worker_ids)]
        self._cursors[req.client] = cur + 1
        return wid, 0, set()


class D2lpm(Dispatcher):
    """Double-deficit dispatch: per-(client, worker) quantum credit controls
    how sticky a client may stay to the workers caching its prefix."""

    name = "d2lpm"
    uses_global_tree = True

    def __init__(self, worker_ids: list[int], quantum: int, weights: CostWeights):
        super().__init__(worker_ids)
        if quantum <= 0:
            raise ValueError("quantum must be positive")
        self.quantum = quantum
        self.weights = weights
        self.tree = RadixTree(track_workers=True)
        self.q: dict[tuple[str, int], int] = {}

    def counter(self, client: str, worker: int) -> int:
        return self.q.get((client, worker), 0)

    def select_worker(self, matched: set[int], client: str) -> int:
        avail = [w for w in self.worker_ids if self.counter(client, w) > 0]
        while not avail:
            for w in self.worker_ids:
                self.q[(client, w)] = self.counter(client, w) + self.quantum
            avail = [w for w in self.worker_ids if self.counter(client, w) > 0]
        cand = [w for w in avail if w in matched]
        return self._min_queue(cand if cand else avail)

    def select(self, req: Request, now: Time) -> tuple[int, int, set[int]]:
        match_len, matched = self.tree.longest_match_workers(req.input_tokens, now=now)
        wid = self.select_worker(matched, req.client)
        return wid, match_len, matched

    def after_dispatch(self, req: Request, wid: int, now: Time) -> None:
        key = (req.client, wid)
        self.q[key] = self.counter(req.client, wid) - self.weights.w_e * req.input_len
        self.tree.insert(req.input_tokens, now=now, worker=wid)

    def on_finish(self, client: str, worker: int, output_tokens: int, now: Time) -> None:
        key = (client, worker)
        self.q[key] = self.counter(client, worker) - self.weights.w_q * output_tokens
        super().on_finish(client, worker, output_tokens, now)

    def on_eviction(self, path: TokenSeq, keep_len: int, worker: int, notice_time: Time, now: Time) -> None:
        self.tree.evict_notify(path, worker, keep_len, notice_time)


class ThresholdRouter(Dispatcher):
    """Simplified prefix-ratio router: exploit locality when the matched
    fraction of the input reaches theta, otherwise balance load."""

    name = "threshold"
    uses_global_tree = True

    def __init__(self, worker_ids: list[int], theta: float):
        super().__init__(worker_ids)
        if not 0.0 <= theta <= 1.0:
            raise ValueError("theta must be in [0, 1]")
        self.theta = theta
        self.tree = RadixTree(track_workers=True)

    def select(self, req: Request, now: Time) -> tuple[int, int, set[int]]:
        match_len, matched = self.tree.longest_match_workers(req.input_tokens, now=now)
        if matched and req.input_len > 0 and match_len / req.input_len >= self.theta:
            wid = self._min_queue(sorted(matched))
        else:
            wid = self._min_queue(self.worker_ids)
        return wid, match_len, matched

    def after_dispatch(self, req: Request, wid: int, now: Time) -> None:
        self.tree.insert(req.input_tokens, now=now, worker=wid)

    def on_eviction(self, path: TokenSeq, keep_len: int, worker: int, notice_time: Time, now: Time) -> None:
        self.tree.evict_notify(path, worker, keep_len, notice_time)


def make_dispatcher(
    name: str,
    worker_ids: list[int],
    weights: CostWeights,
    quantum: Optional[int] = None,
    theta: float = 0.5,
) -> Dispatcher:
    if name == "d2lpm":
        if quantum is None:
            raise ValueError("d2lpm requires a quantum")
        return D2lpm(worker_ids, quantum, weights)
    if name == "rr":
        return RoundRobin(worker_ids)
    if name == "per_client_rr":
        return PerClientRoundRobin(worker_ids)
    if name == "threshold":
        return ThresholdRouter(worker_ids, theta)
    raise ValueError(f"unknown global policy {name!r}")
