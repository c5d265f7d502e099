"""fairsched: deterministic simulator and policy library for fair,
locality-aware LLM request scheduling."""

from .accounting import CostWeights, ServiceLog, compute_U
from .engine import EventKind, EventLog, Simulator, Time, ms, seconds, substream, to_ms
from .global_policies import make_dispatcher
from .local_policies import make_local_policy
from .metrics import BoundReport, jain_index, percentile_latency
from .radix import RadixTree
from .requests import Request, SystemParams, Trace, TraceRecord
from .runner import (
    ExperimentConfig,
    RunResult,
    SchedulingConfig,
    run_experiment,
    summarize,
    verify_run,
)
from .speedups import KERNEL_IMPL, common_prefix_len
from .worker import StepTiming, Worker
from .workload import ClientProfile, generate_trace

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "ClientProfile",
    "CostWeights",
    "EventKind",
    "EventLog",
    "ExperimentConfig",
    "KERNEL_IMPL",
    "RadixTree",
    "Request",
    "RunResult",
    "SchedulingConfig",
    "ServiceLog",
    "Simulator",
    "StepTiming",
    "SystemParams",
    "Time",
    "Trace",
    "TraceRecord",
    "Worker",
    "common_prefix_len",
    "compute_U",
    "generate_trace",
    "jain_index",
    "make_dispatcher",
    "make_local_policy",
    "ms",
    "percentile_latency",
    "run_experiment",
    "seconds",
    "substream",
    "summarize",
    "to_ms",
    "verify_run",
    "__version__",
]
