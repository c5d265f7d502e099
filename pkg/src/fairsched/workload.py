"""Synthetic trace generation: Gamma-process arrivals, flat and tree-shaped
program structures, and the misbehavior profiles (more requests / longer
prefixes)."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace, asdict

from .engine import Time, substream
from .requests import SystemParams, Trace, TraceRecord


@dataclass
class ClientProfile:
    name: str
    rate: float = 1.0  # programs per second
    cv: float = 1.0  # inter-arrival coefficient of variation
    program: str = "flat"  # "flat" | "tree"
    branches: int = 2
    depth: int = 0  # tree levels below the root
    prefix_len: int = 128
    suffix_len: int = 16
    output_len: int = 8
    output_dist: str = "constant"  # "constant" | "lognormal"
    output_cv: float = 0.5
    misbehavior: str = "none"  # "none" | "S1" | "S2"
    s1_factor: float = 2.0
    s2_factor: float = 2.0
    prefix_scope: str = "client"  # "client" | "program"

    def validate(self, params: SystemParams) -> None:
        if self.rate <= 0 or self.cv <= 0:
            raise ValueError(f"{self.name}: rate and cv must be positive")
        if self.program not in ("flat", "tree"):
            raise ValueError(f"{self.name}: unknown program kind {self.program!r}")
        if self.prefix_len < 0 or self.suffix_len <= 0:
            raise ValueError(f"{self.name}: bad prefix/suffix lengths")
        deepest = self.prefix_len + (self.depth + 1) * self.suffix_len
        if deepest > params.L_input:
            raise ValueError(f"{self.name}: deepest request ({deepest} tokens) exceeds L_input")
        if self.output_len > params.L_output:
            raise ValueError(f"{self.name}: output_len exceeds L_output")


def apply_misbehavior(profile: ClientProfile, params: SystemParams) -> ClientProfile:
    """Resolve the misbehavior tag into an effective profile."""
    if profile.misbehavior == "none":
        return replace(profile)
    if profile.misbehavior == "S1":
        if profile.program == "tree":
            out = replace(profile, branches=max(2, round(profile.branches * profile.s1_factor)))
        else:
            out = replace(profile, rate=profile.rate * profile.s1_factor)
    elif profile.misbehavior == "S2":
        out = replace(profile, prefix_len=round(profile.prefix_len * profile.s2_factor))
    else:
        raise ValueError(f"unknown misbehavior tag {profile.misbehavior!r}")
    out.validate(params)
    return out


def gen_gamma_arrivals(rate: float, cv: float, horizon: Time, rng: random.Random) -> list[Time]:
    """Gamma-process arrival timestamps with mean rate and inter-arrival CV."""
    if rate <= 0 or cv <= 0:
        raise ValueError("rate and cv must be positive")
    shape = 1.0 / (cv * cv)
    scale_s = (cv * cv) / rate
    out: list[Time] = []
    t = 0.0
    while True:
        t += rng.gammavariate(shape, scale_s) * 1_000_000
        if t >= horizon:
            return out
        out.append(round(t))


def _sample_output_len(profile: ClientProfile, params: SystemParams, rng: random.Random) -> int:
    if profile.output_dist == "constant":
        return profile.output_len
    if profile.output_dist == "lognormal":
        cv = profile.output_cv
        sigma = math.sqrt(math.log(1 + cv * cv))
        mu = math.log(profile.output_len) - sigma * sigma / 2
        return max(1, min(params.L_output, round(rng.lognormvariate(mu, sigma))))
    raise ValueError(f"unknown output distribution {profile.output_dist!r}")


def gen_program(
    profile: ClientProfile,
    params: SystemParams,
    root_arrival: Time,
    program_idx: int,
    rng_out: random.Random,
) -> list[TraceRecord]:
    """One program instance: a single request, or a dependency tree where
    each level shares the full parent-chain input as its prefix."""
    if profile.prefix_scope == "program":
        prefix_id = f"pfx:{profile.name}:{program_idx}"
    else:
        prefix_id = f"pfx:{profile.name}"
    root = TraceRecord(
        rid=f"{profile.name}-{program_idx}",
        client=profile.name,
        arrival_time=root_arrival,
        input_token_count=profile.prefix_len + profile.suffix_len,
        shared_prefix_id=prefix_id,
        prefix_len=profile.prefix_len,
        true_output_len=_sample_output_len(profile, params, rng_out),
        parent_id=None,
    )
    records = [root]
    if profile.program == "flat" or profile.depth == 0:
        return records
    frontier = [root]
    for _level in range(profile.depth):
        next_frontier = []
        for parent in frontier:
            for b in range(profile.branches):
                child = TraceRecord(
                    rid=f"{parent.rid}.{b}",
                    client=profile.name,
                    arrival_time=root_arrival,
                    input_token_count=parent.input_token_count + profile.suffix_len,
                    shared_prefix_id=f"req:{parent.rid}",
                    prefix_len=parent.input_token_count,
                    true_output_len=_sample_output_len(profile, params, rng_out),
                    parent_id=parent.rid,
                )
                records.append(child)
                next_frontier.append(child)
        frontier = next_frontier
    return records


def program_size(branches: int, depth: int) -> int:
    return sum(branches**level for level in range(depth + 1))


def generate_trace(
    profiles: list[ClientProfile],
    params: SystemParams,
    seed: int,
    horizon: Time,
) -> Trace:
    """Pure function of (profiles, params, seed, horizon)."""
    records: list[TraceRecord] = []
    for profile in profiles:
        eff = apply_misbehavior(profile, params)
        eff.validate(params)
        rng_arr = substream(seed, f"arrivals:{eff.name}")
        rng_out = substream(seed, f"outputs:{eff.name}")
        for k, t in enumerate(gen_gamma_arrivals(eff.rate, eff.cv, horizon, rng_arr)):
            records.extend(gen_program(eff, params, t, k, rng_out))
    # Parents precede children: same nominal arrival, so order by tree depth
    # (rid dots) before rid.
    records.sort(key=lambda r: (r.arrival_time, r.rid.count("."), r.rid))
    trace = Trace(records)
    return trace


def profile_from_dict(d: dict) -> ClientProfile:
    return ClientProfile(**d)


def profile_to_dict(p: ClientProfile) -> dict:
    return asdict(p)
