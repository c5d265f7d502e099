"""Experiment harness: config schema, run wiring, invariant monitors,
bound verification and artifact output.

A run is a pure function of (config, optional trace).  Re-running the same
config twice yields byte-identical artifacts.
"""
from __future__ import annotations

import dataclasses
import io
import os
from dataclasses import dataclass, field
from typing import Optional

import yaml

from . import metrics
from .accounting import CostWeights, ServiceLog, compute_U
from .engine import EventKind, EventLog, Simulator, Time, ms, seconds
from .global_policies import Dispatcher, make_dispatcher
from .local_policies import make_local_policy
from .requests import Request, SystemParams, Trace
from .worker import StepTiming, Worker
from .workload import ClientProfile, apply_misbehavior, generate_trace

VIOLATION_CAP = 1000  # per category; enough to diagnose, bounded memory


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid config:\n  " + "\n  ".join(problems))
        self.problems = problems


@dataclass
class SchedulingConfig:
    local_policy: str = "dlpm"  # dlpm | lpm | vtc | fcfs
    global_policy: str = "rr"  # d2lpm | rr | per_client_rr | threshold
    q_u: Optional[int] = None  # absolute units; overrides q_u_frac
    q_u_frac: float = 0.5  # local quantum as a fraction of U
    q_w: Optional[int] = None
    q_w_frac: float = 0.5
    theta: float = 0.5
    chunk_size: int = 8192
    admission_interval: int = 1
    output_reserve: int = 0
    cache_capacity: Optional[int] = None  # defaults to M
    eviction_notice_delay_ms: float = 0.0


@dataclass
class ExperimentConfig:
    seed: int = 0
    horizon_ms: float = 2000.0
    time_cap_ms: Optional[float] = None
    latency_window_ms: float = 1000.0
    params: SystemParams = field(default_factory=SystemParams)
    timing: StepTiming = field(default_factory=StepTiming)
    scheduling: SchedulingConfig = field(default_factory=SchedulingConfig)
    clients: list[ClientProfile] = field(default_factory=list)

    def validate(self) -> None:
        problems: list[str] = []
        try:
            self.params.validate()
        except ValueError as exc:
            problems.append(f"params: {exc}")
        s = self.scheduling
        if s.local_policy not in ("dlpm", "lpm", "vtc", "fcfs"):
            problems.append(f"scheduling.local_policy: unknown {s.local_policy!r}")
        if s.global_policy not in ("d2lpm", "rr", "per_client_rr", "threshold"):
            problems.append(f"scheduling.global_policy: unknown {s.global_policy!r}")
        if s.q_u is not None and s.q_u <= 0:
            problems.append("scheduling.q_u: must be positive")
        if s.q_w is not None and s.q_w <= 0:
            problems.append("scheduling.q_w: must be positive")
        if not 0 < s.q_u_frac or not 0 < s.q_w_frac:
            problems.append("scheduling quantum fractions must be positive")
        if not 0.0 <= s.theta <= 1.0:
            problems.append("scheduling.theta: must be in [0, 1]")
        if s.chunk_size <= 0:
            problems.append("scheduling.chunk_size: must be positive")
        if s.output_reserve < 0:
            problems.append("scheduling.output_reserve: must be non-negative")
        elif not problems and self.params.L_input + s.output_reserve > self.params.M:
            problems.append("scheduling.output_reserve: L_input + reserve exceeds M")
        if s.cache_capacity is not None and self.clients and not problems:
            deepest = 0
            for p in self.clients:
                try:
                    eff = apply_misbehavior(p, self.params)
                except ValueError:
                    continue  # reported by the profile check below
                deepest = max(deepest, eff.prefix_len + (eff.depth + 1) * eff.suffix_len)
            if s.cache_capacity < deepest:
                problems.append(
                    "scheduling.cache_capacity: smaller than the deepest request; "
                    "an empty worker could never admit it"
                )
        if s.eviction_notice_delay_ms < 0:
            problems.append("scheduling.eviction_notice_delay_ms: must be non-negative")
        if self.horizon_ms <= 0:
            problems.append("horizon_ms: must be positive")
        if self.latency_window_ms <= 0:
            problems.append("latency_window_ms: must be positive")
        if not self.clients:
            problems.append("clients: at least one profile required")
        names = [p.name for p in self.clients]
        if len(names) != len(set(names)):
            problems.append("clients: names must be unique")
        for p in self.clients:
            try:
                p.validate(self.params)
            except ValueError as exc:
                problems.append(f"clients[{p.name}]: {exc}")
        if problems:
            raise ConfigError(problems)

    # -- resolved quanta ---------------------------------------------------

    @property
    def U(self) -> int:
        return compute_U(self.params)

    def resolve_q_u(self) -> int:
        s = self.scheduling
        return s.q_u if s.q_u is not None else max(1, round(s.q_u_frac * self.U))

    def resolve_q_w(self) -> int:
        s = self.scheduling
        return s.q_w if s.q_w is not None else max(1, round(s.q_w_frac * self.U))


# -- (de)serialization -------------------------------------------------------


def _build(cls, data: dict, path: str, problems: list[str]):
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - fields)
    if unknown:
        problems.append(f"{path}: unknown keys {unknown}")
    kwargs = {k: v for k, v in data.items() if k in fields}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        problems.append(f"{path}: {exc}")
        return cls()


def config_from_dict(data: dict) -> ExperimentConfig:
    problems: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["top level must be a mapping"])
    top = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        problems.append(f"top level: unknown keys {unknown}")
    params = _build(SystemParams, data.get("params", {}) or {}, "params", problems)
    timing = _build(StepTiming, data.get("timing", {}) or {}, "timing", problems)
    sched = _build(SchedulingConfig, data.get("scheduling", {}) or {}, "scheduling", problems)
    clients = [
        _build(ClientProfile, c, f"clients[{i}]", problems)
        for i, c in enumerate(data.get("clients", []) or [])
    ]
    cfg = ExperimentConfig(
        seed=data.get("seed", 0),
        horizon_ms=data.get("horizon_ms", 2000.0),
        time_cap_ms=data.get("time_cap_ms"),
        latency_window_ms=data.get("latency_window_ms", 1000.0),
        params=params,
        timing=timing,
        scheduling=sched,
        clients=clients,
    )
    try:
        cfg.validate()
    except ConfigError as exc:
        problems.extend(exc.problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_to_yaml(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True, default_flow_style=False)


def config_from_yaml(text: str) -> ExperimentConfig:
    return config_from_dict(yaml.safe_load(text) or {})


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_yaml(fh.read())


# -- run ----------------------------------------------------------------


@dataclass
class RunResult:
    config: ExperimentConfig
    trace: Trace
    sim: Simulator
    service: ServiceLog
    dispatcher: Dispatcher
    workers: list[Worker]
    violations: dict[str, list]
    counter_extremes: dict[str, tuple[int, int]]
    run_end: Time

    @property
    def log(self) -> EventLog:
        return self.sim.log

    @property
    def lifecycle(self) -> dict[str, dict]:
        return self.sim.log.lifecycle

    @property
    def clients(self) -> list[str]:
        return sorted({r.client for r in self.trace.records})

    @property
    def busy_union(self) -> list[tuple[Time, Time]]:
        return metrics.merge_intervals(
            [iv for w in self.workers for iv in w.busy_intervals]
        )


def run_experiment(cfg: ExperimentConfig, trace: Optional[Trace] = None) -> RunResult:
    cfg.validate()
    params = cfg.params
    weights = CostWeights(params.w_e, params.w_q)
    U = cfg.U
    q_u = cfg.resolve_q_u()
    q_w = cfg.resolve_q_w()
    sched = cfg.scheduling

    if trace is None:
        trace = generate_trace(cfg.clients, params, cfg.seed, ms(cfg.horizon_ms))
    trace.validate(params)
    requests, output_lens = trace.materialize()
    children: dict[str, list[Request]] = {}
    for req in requests:
        if req.parent is not None:
            children.setdefault(req.parent, []).append(req)

    sim = Simulator(seed=cfg.seed)
    service = ServiceLog(weights)
    worker_ids = list(range(params.D))
    dispatcher = make_dispatcher(
        sched.global_policy, worker_ids, weights, quantum=q_w, theta=sched.theta
    )
    notice_delay = ms(sched.eviction_notice_delay_ms)

    def finish_cb(req: Request, wid: int, output_tokens: int, now: Time) -> None:
        dispatcher.on_finish(req.client, wid, output_tokens, now)
        for child in children.pop(req.rid, ()):
            sim.schedule(
                now,
                EventKind.REQUEST_ARRIVAL,
                {"rid": child.rid, "client": child.client},
                callback=lambda ev, r=child: arrive(r),
            )

    workers: list[Worker] = []
    for wid in worker_ids:
        policy = make_local_policy(sched.local_policy, quantum=q_u)
        worker = Worker(
            sim,
            wid,
            params,
            weights,
            cfg.timing,
            policy,
            service,
            output_lens,
            cache_capacity=sched.cache_capacity,
            chunk_size=sched.chunk_size,
            admission_interval=sched.admission_interval,
            output_reserve=sched.output_reserve,
            on_request_finished=finish_cb,
        )
        workers.append(worker)
        if dispatcher.uses_global_tree:

            def on_evict(full_path, keep_len, evicted, wid=wid):
                emit = sim.now
                sim.schedule(
                    emit + notice_delay,
                    EventKind.EVICTION_NOTICE,
                    {"worker": wid, "keep_len": keep_len, "evicted": evicted, "emitted": emit},
                    callback=lambda ev, p=full_path, k=keep_len, w=wid, t=emit: (
                        dispatcher.on_eviction(p, k, w, t, sim.now)
                    ),
                )

            worker.tree.on_evict = on_evict

    def arrive(req: Request) -> None:
        now = sim.now
        rec = sim.log.request(req.rid)
        rec.update(
            client=req.client,
            arrival_time=now,
            input_len=req.input_len,
            parent=req.parent,
        )
        drec = dispatcher.dispatch(req, now)
        rec["dispatch_worker"] = drec.worker
        rec["dispatch_match_len"] = drec.match_len
        workers[drec.worker].enqueue(req)

    for req in requests:
        if req.parent is None:
            sim.schedule(
                req.arrival,
                EventKind.REQUEST_ARRIVAL,
                {"rid": req.rid, "client": req.client},
                callback=lambda ev, r=req: arrive(r),
            )

    violations: dict[str, list] = {
        "local_counter": [],
        "global_counter": [],
        "pool": [],
        "work_conservation": [],
    }
    extremes: dict[str, tuple[int, int]] = {}

    def note(key: str, item) -> None:
        if len(violations[key]) < VIOLATION_CAP:
            violations[key].append(item)

    def update_extreme(key: str, value: int) -> None:
        lo, hi = extremes.get(key, (value, value))
        extremes[key] = (min(lo, value), max(hi, value))

    def monitor(t: Time) -> None:
        for w in workers:
            counters = w.policy.counters()
            if sched.local_policy == "dlpm" and counters:
                for client, qv in counters.items():
                    update_extreme("local_q", qv)
                    if not (-U < qv <= q_u):
                        note("local_counter", (t, w.wid, client, qv))
            if w.pool_used > params.M:
                note("pool", (t, w.wid, w.pool_used))
            if not w.busy and w.queue and w.has_admissible_waiting():
                note("work_conservation", (t, w.wid, len(w.queue)))
        if sched.global_policy == "d2lpm":
            for (client, wid), qv in dispatcher.q.items():
                update_extreme("global_q", qv)
                if not (-U < qv <= q_w):
                    note("global_counter", (t, wid, client, qv))

    sim.add_boundary_check(monitor)

    cap = ms(cfg.time_cap_ms) if cfg.time_cap_ms is not None else ms(cfg.horizon_ms) * 1000 + seconds(3600)
    sim.run_to_completion(cap)

    return RunResult(
        config=cfg,
        trace=trace,
        sim=sim,
        service=service,
        dispatcher=dispatcher,
        workers=workers,
        violations=violations,
        counter_extremes=extremes,
        run_end=sim.now,
    )


# -- verification ---------------------------------------------------------


def verify_run(result: RunResult) -> list[metrics.BoundReport]:
    cfg = result.config
    sched = cfg.scheduling
    U = cfg.U
    q_u = cfg.resolve_q_u()
    q_w = cfg.resolve_q_w()
    D = cfg.params.D
    n = len(result.clients)
    window = ms(cfg.latency_window_ms)
    lifecycle = result.lifecycle
    service = result.service
    local_guaranteed = sched.local_policy == "dlpm"
    global_guaranteed = local_guaranteed and sched.global_policy == "d2lpm"

    reports: list[metrics.BoundReport] = []
    if D == 1:
        bound = 2 * (U + q_u)
        reports.append(
            metrics.verify_service_bound_pairwise(
                service, lifecycle, bound, result.run_end,
                "local-backlogged-pair", guaranteed=local_guaranteed,
            )
        )
        reports.append(
            metrics.verify_service_bound_vs_nonbacklogged(
                service, lifecycle, bound, result.run_end,
                "local-backlogged-vs-any", guaranteed=local_guaranteed,
            )
        )
        reports.append(
            metrics.verify_latency_bound(
                service, lifecycle, result.busy_union, n,
                metrics.local_latency_units(n, U, q_u), window,
                "local-latency", guaranteed=local_guaranteed,
            )
        )
    else:
        bound = 2 * D * (U + q_w)
        reports.append(
            metrics.verify_global_max_min(
                service, lifecycle, bound, result.run_end,
                "global-max-min", guaranteed=global_guaranteed,
            )
        )
        reports.append(
            metrics.verify_service_bound_vs_nonbacklogged(
                service, lifecycle, bound, result.run_end,
                "global-backlogged-vs-any", guaranteed=global_guaranteed,
            )
        )
        reports.append(
            metrics.verify_latency_bound(
                service, lifecycle, result.busy_union, n,
                metrics.global_latency_units(n, D, U, q_w), window,
                "global-latency", guaranteed=global_guaranteed,
            )
        )

    reports.append(
        metrics.BoundReport(
            "local-counter-range",
            float(len(result.violations["local_counter"])),
            0.0,
            applicable=sched.local_policy == "dlpm",
            guaranteed=local_guaranteed,
            detail=f"q range {result.counter_extremes.get('local_q')}",
        )
    )
    reports.append(
        metrics.BoundReport(
            "global-counter-range",
            float(len(result.violations["global_counter"])),
            0.0,
            applicable=sched.global_policy == "d2lpm",
            guaranteed=sched.global_policy == "d2lpm",
            detail=f"q range {result.counter_extremes.get('global_q')}",
        )
    )
    reports.append(
        metrics.BoundReport(
            "work-conservation",
            float(len(result.violations["work_conservation"])),
            0.0,
            detail="idle worker with admissible queued request",
        )
    )
    max_output = max(
        (rec.get("output_len", 0) for rec in lifecycle.values()), default=0
    )
    reports.append(
        metrics.BoundReport(
            "pool-safety",
            float(len(result.violations["pool"])),
            0.0,
            guaranteed=sched.output_reserve >= max_output > 0,
            detail="memory pool over budget",
        )
    )
    return reports


# -- summaries -------------------------------------------------------------


def summarize(result: RunResult) -> dict:
    lifecycle = result.lifecycle
    clients = result.clients
    finished = [r for r in lifecycle.values() if "finish_time" in r]
    makespan = result.run_end
    totals = {c: result.service.client_perspective_service(c, 0, 1 << 62) for c in clients}
    throughput = sum(totals.values()) / (makespan / 1_000_000) if makespan else 0.0

    jain = None
    window = metrics.all_active_window(lifecycle)
    if window is not None:
        lo, hi = window
        rates = [result.service.client_perspective_service(c, lo, hi) / (hi - lo) for c in clients]
        try:
            jain = metrics.jain_index(rates)
        except ValueError:
            jain = None

    delays = [r["admit_time"] - r["arrival_time"] for r in lifecycle.values() if "admit_time" in r]
    ttfts = [
        r["first_token_time"] - r["arrival_time"]
        for r in lifecycle.values()
        if "first_token_time" in r
    ]
    out = {
        "n_requests": len([r for r in lifecycle.values() if "arrival_time" in r]),
        "n_finished": len(finished),
        "makespan_ms": makespan / 1000,
        "throughput_units_per_s": throughput,
        "client_service": totals,
        "jain_index": jain,
        "cache_hit_rate": metrics.cache_hit_rate(lifecycle),
        "event_hash": result.log.sha256(),
    }
    if delays:
        out["admit_delay_p50_ms"] = metrics.percentile_latency(delays, 50) / 1000
        out["admit_delay_p99_ms"] = metrics.percentile_latency(delays, 99) / 1000
    if ttfts:
        out["ttft_p50_ms"] = metrics.percentile_latency(ttfts, 50) / 1000
        out["ttft_p99_ms"] = metrics.percentile_latency(ttfts, 99) / 1000
    return out


# -- artifacts --------------------------------------------------------------


def bounds_csv(reports: list[metrics.BoundReport]) -> str:
    lines = ["theorem,measured,bound,margin,applicable,guaranteed,passed,detail"]
    for r in reports:
        row = r.row()
        detail = row["detail"].replace(",", ";")
        lines.append(
            f"{row['theorem']},{row['measured']},{row['bound']},{row['margin']},"
            f"{row['applicable']},{row['guaranteed']},{row['passed']},{detail}"
        )
    return "\n".join(lines) + "\n"


def dispatch_csv(result: RunResult) -> str:
    lines = ["time,rid,client,worker,match_len,matched_workers"]
    for rec in result.dispatcher.records:
        matched = "|".join(str(w) for w in rec.matched_workers)
        lines.append(f"{rec.time},{rec.rid},{rec.client},{rec.worker},{rec.match_len},{matched}")
    return "\n".join(lines) + "\n"


def worker_metrics_csv(result: RunResult) -> str:
    cols = [
        "worker",
        "time",
        "queue_len",
        "batch_size",
        "pool_used",
        "cache_hit_tokens",
        "cum_extend_tokens",
        "cum_output_tokens",
    ]
    lines = [",".join(cols)]
    for w in result.workers:
        for row in w.metrics_rows:
            lines.append(",".join(str(row.get(c, w.wid if c == "worker" else "")) for c in cols))
    return "\n".join(lines) + "\n"


def write_artifacts(result: RunResult, reports: list[metrics.BoundReport], out_dir: str) -> dict:
    os.makedirs(out_dir, exist_ok=True)

    def put(name: str, text: str) -> None:
        with open(os.path.join(out_dir, name), "w") as fh:
            fh.write(text)

    summary = summarize(result)
    put("events.jsonl", result.log.to_jsonl())
    put("service.csv", result.service.to_csv())
    put("dispatch.csv", dispatch_csv(result))
    put("worker_metrics.csv", worker_metrics_csv(result))
    put("bounds.csv", bounds_csv(reports))
    put("summary.yaml", yaml.safe_dump(summary, sort_keys=True))
    put("effective_config.yaml", config_to_yaml(result.config))
    buf = io.StringIO()
    for rec in result.trace.records:
        buf.write(rec.to_json() + "\n")
    put("trace.jsonl", buf.getvalue())
    return summary
