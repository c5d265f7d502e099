"""Simulated data-parallel worker: memory pool, continuous batching loop,
admission checks, and a parametric step-latency model."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .accounting import CostWeights, ServiceLog
from .engine import EventKind, Simulator, Time, ms
from .local_policies import LocalPolicy
from .radix import RadixTree
from .requests import Request, SystemParams


@dataclass
class StepTiming:
    c0_ms: float = 5.0
    c_prefill_ms: float = 0.05  # per computed extend token
    c_decode_ms: float = 0.4  # per request in batch

    def __post_init__(self) -> None:
        if min(self.c0_ms, self.c_prefill_ms, self.c_decode_ms) < 0:
            raise ValueError("latency coefficients must be non-negative")

    def latency(self, extend_tokens: int, batch_size: int) -> Time:
        raw = ms(self.c0_ms + self.c_prefill_ms * extend_tokens + self.c_decode_ms * batch_size)
        return max(raw, 1)


@dataclass
class BatchEntry:
    request: Request
    match_len: int
    extend_total: int
    extend_done: int
    generated: int
    path: list
    admit_time: Time


class Worker:
    def __init__(
        self,
        sim: Simulator,
        wid: int,
        params: SystemParams,
        weights: CostWeights,
        timing: StepTiming,
        policy: LocalPolicy,
        service_log: ServiceLog,
        output_lens: dict[str, int],
        cache_capacity: Optional[int] = None,
        chunk_size: int = 8192,
        admission_interval: int = 1,
        output_reserve: int = 0,
        on_request_finished: Optional[Callable[[Request, int, int, Time], None]] = None,
    ):
        self.sim = sim
        self.wid = wid
        self.params = params
        self.weights = weights
        self.timing = timing
        self.policy = policy
        policy.attach(self)
        self.service_log = service_log
        self.output_lens = output_lens
        self.chunk_size = chunk_size
        self.admission_interval = max(1, admission_interval)
        self.output_reserve = output_reserve
        self.on_request_finished = on_request_finished

        self.tree = RadixTree(capacity=cache_capacity if cache_capacity is not None else params.M)
        self.queue: list[Request] = []
        self.batch: dict[str, BatchEntry] = {}
        self.generated_total = 0
        self.busy = False
        self.steps_since_fill = 0
        self.busy_intervals: list[tuple[Time, Time]] = []
        self.metrics_rows: list[dict] = []
        self.cum_extend = 0
        self.cum_output = 0
        self.cum_hit_tokens = 0
        self.cum_input_tokens = 0

    # -- admission -------------------------------------------------------

    @property
    def pool_used(self) -> int:
        return self.tree.pinned_tokens + self.generated_total

    def match_len(self, req: Request) -> int:
        mlen, _ = self.tree.match_prefix(req.input_tokens, now=self.sim.now)
        return mlen

    def _reserved_headroom(self) -> int:
        # output_reserve is a per-request output budget: every running entry
        # keeps its unconsumed share reserved so decode growth cannot
        # overflow the pool as long as the reserve covers true output lengths
        return sum(max(0, self.output_reserve - e.generated) for e in self.batch.values())

    def can_add(self, req: Request) -> bool:
        mlen, matched_unpinned = self.tree.probe(req.input_tokens)
        extend = req.input_len - mlen
        footprint_after = self.tree.pinned_tokens + matched_unpinned + extend
        reserve = self._reserved_headroom() + self.output_reserve
        if footprint_after + self.generated_total + reserve > self.params.M:
            return False
        if footprint_after > (self.tree.capacity or footprint_after):
            return False
        return True

    def try_admit(self, req: Request) -> Optional[BatchEntry]:
        if not self.can_add(req):
            return None
        now = self.sim.now
        mlen, path = self.tree.admit(req.input_tokens, now=now)
        extend = req.input_len - mlen
        entry = BatchEntry(
            request=req,
            match_len=mlen,
            extend_total=extend,
            extend_done=0,
            generated=0,
            path=path,
            admit_time=now,
        )
        self.queue.remove(req)
        self.batch[req.rid] = entry
        self.service_log.add_extend(now, req.client, extend, req.input_len)
        self.cum_extend += extend
        self.cum_hit_tokens += mlen
        self.cum_input_tokens += req.input_len
        rec = self.sim.log.request(req.rid)
        rec.update(admit_time=now, match_len=mlen, extend_len=extend, worker=self.wid)
        return entry

    def has_admissible_waiting(self) -> bool:
        return any(self.can_add(r) for r in self.queue)

    # -- event handlers ----------------------------------------------------

    def enqueue(self, req: Request) -> None:
        was_active = any(r.client == req.client for r in self.queue) or any(
            e.request.client == req.client for e in self.batch.values()
        )
        self.queue.append(req)
        self.policy.on_request_enqueued(req, was_active)
        self.maybe_step()

    def maybe_step(self) -> None:
        if self.busy:
            return
        if not self.batch or self.steps_since_fill >= self.admission_interval:
            self.policy.fill()
            self.steps_since_fill = 0
        if not self.batch:
            return
        plan: dict[str, int] = {}
        extend_this = 0
        for rid, e in self.batch.items():
            remaining = e.extend_total - e.extend_done
            if remaining > 0:
                adv = min(remaining, self.chunk_size)
                plan[rid] = adv
                extend_this += adv
        latency = self.timing.latency(extend_this, len(self.batch))
        start = self.sim.now
        self.busy = True
        self.busy_intervals.append((start, start + latency))
        self.sim.schedule(
            start + latency,
            EventKind.STEP_COMPLETE,
            {
                "worker": self.wid,
                "start": start,
                "extend_tokens": extend_this,
                "batch_size": len(self.batch),
                "batch": sorted(self.batch),
            },
            callback=lambda ev, plan=plan: self._on_step_complete(plan),
        )

    def _on_step_complete(self, plan: dict[str, int]) -> None:
        now = self.sim.now
        outputs: dict[str, int] = {}
        finished: list[BatchEntry] = []
        for rid, e in self.batch.items():
            adv = plan.get(rid, 0)
            produced = False
            if adv:
                e.extend_done += adv
                if e.extend_done == e.extend_total:
                    produced = True  # prefill completion emits the first token
            else:
                produced = True
            if produced:
                if e.generated == 0:
                    self.sim.log.request(rid)["first_token_time"] = now
                e.generated += 1
                self.generated_total += 1
                outputs[e.request.client] = outputs.get(e.request.client, 0) + 1
                limit = min(self.output_lens[rid], self.params.L_output)
                if e.generated >= limit:
                    finished.append(e)
        for client in sorted(outputs):
            self.service_log.add_output(now, client, outputs[client])
            self.cum_output += outputs[client]
        self.policy.on_outputs(outputs)
        for e in finished:
            rid = e.request.rid
            del self.batch[rid]
            self.generated_total -= e.generated
            self.tree.unpin(e.path)
            rec = self.sim.log.request(rid)
            rec.update(finish_time=now, output_len=e.generated)
            self.sim.schedule(
                now,
                EventKind.REQUEST_FINISHED,
                {"rid": rid, "client": e.request.client, "worker": self.wid, "output_tokens": e.generated},
                callback=lambda ev, e=e: self._notify_finished(e),
            )
        self.metrics_rows.append(
            {
                "time": now,
                "queue_len": len(self.queue),
                "batch_size": len(self.batch),
                "pool_used": self.pool_used,
                "cache_hit_tokens": self.cum_hit_tokens,
                "cum_extend_tokens": self.cum_extend,
                "cum_output_tokens": self.cum_output,
            }
        )
        self.busy = False
        self.steps_since_fill += 1
        self.maybe_step()

    def _notify_finished(self, e: BatchEntry) -> None:
        if self.on_request_finished is not None:
            self.on_request_finished(e.request, self.wid, e.generated, self.sim.now)
