import math
import statistics

import pytest

from fairsched.engine import seconds, substream
from fairsched.requests import SystemParams, Trace
from fairsched.workload import (
    ClientProfile,
    apply_misbehavior,
    gen_gamma_arrivals,
    generate_trace,
    program_size,
)

PARAMS = SystemParams(L_input=4096, L_output=1024, M=16384)


def test_cv_one_is_exponential():
    rng = substream(11, "t")
    ts = gen_gamma_arrivals(rate=50, cv=1.0, horizon=seconds(200), rng=rng)
    gaps = [(b - a) / 1e6 for a, b in zip(ts, ts[1:])]
    mean = statistics.mean(gaps)
    cv = statistics.stdev(gaps) / mean
    assert mean == pytest.approx(1 / 50, rel=0.05)
    assert cv == pytest.approx(1.0, rel=0.05)  # exponential: cv == 1


def test_low_cv_is_more_regular():
    rng = substream(11, "t")
    ts = gen_gamma_arrivals(rate=50, cv=0.2, horizon=seconds(100), rng=rng)
    gaps = [(b - a) / 1e6 for a, b in zip(ts, ts[1:])]
    cv = statistics.stdev(gaps) / statistics.mean(gaps)
    assert cv == pytest.approx(0.2, rel=0.15)


def test_same_seed_identical_timestamps():
    a = gen_gamma_arrivals(5, 1.0, seconds(10), substream(3, "x"))
    b = gen_gamma_arrivals(5, 1.0, seconds(10), substream(3, "x"))
    assert a == b
    assert a == sorted(a)
    assert all(0 <= t < seconds(10) for t in a)


def test_arrival_count_within_three_sigma():
    # rate 10/s over 100s: expected 1000, sigma ~ sqrt(1000)
    sigma = math.sqrt(1000)
    counts = []
    for seed in range(50):
        ts = gen_gamma_arrivals(10, 1.0, seconds(100), substream(seed, "arr"))
        counts.append(len(ts))
        assert abs(len(ts) - 1000) <= 3 * sigma, seed
    assert abs(statistics.mean(counts) - 1000) <= 3 * sigma / math.sqrt(50)


def test_tree_program_b2_d1_structure():
    prof = ClientProfile(name="a", program="tree", branches=2, depth=1, prefix_len=40, suffix_len=8)
    trace = generate_trace([prof], PARAMS, seed=1, horizon=seconds(1))
    roots = [r for r in trace.records if r.parent_id is None]
    per_program = program_size(2, 1)
    assert per_program == 3
    assert len(trace.records) == 3 * len(roots)
    reqs, _ = Trace(trace.records).materialize()
    by_rid = {r.rid: r for r in reqs}
    for rec in trace.records:
        if rec.parent_id is not None:
            child, parent = by_rid[rec.rid], by_rid[rec.parent_id]
            assert child.input_tokens[: parent.input_len] == parent.input_tokens


def test_tree_b4_d4_is_341_requests():
    assert program_size(4, 4) == 341
    prof = ClientProfile(
        name="a", rate=0.5, program="tree", branches=4, depth=4, prefix_len=100, suffix_len=8
    )
    trace = generate_trace([prof], PARAMS, seed=2, horizon=seconds(10))
    roots = [r for r in trace.records if r.parent_id is None]
    assert roots and len(trace.records) == 341 * len(roots)


def test_b1_chain_prefix_grows_monotonically():
    prof = ClientProfile(name="a", program="tree", branches=1, depth=5, prefix_len=20, suffix_len=4)
    trace = generate_trace([prof], PARAMS, seed=3, horizon=seconds(1))
    chain = sorted(
        (r for r in trace.records if r.rid.startswith("a-0")), key=lambda r: r.rid.count(".")
    )
    lens = [r.input_token_count for r in chain]
    assert lens == sorted(lens) and len(set(lens)) == len(lens)
    for earlier, later in zip(chain, chain[1:]):
        assert later.prefix_len == earlier.input_token_count


def test_s2_doubles_prefix():
    prof = ClientProfile(name="a", prefix_len=1000, suffix_len=10, misbehavior="S2", s2_factor=2.0)
    assert apply_misbehavior(prof, PARAMS).prefix_len == 2000


def test_s1_tree_branch_growth():
    assert program_size(2, 3) == 15
    assert program_size(4, 3) == 85
    prof = ClientProfile(
        name="a", program="tree", branches=2, depth=3, prefix_len=100, suffix_len=8,
        misbehavior="S1", s1_factor=2.0,
    )
    eff = apply_misbehavior(prof, PARAMS)
    assert eff.branches == 4
    assert program_size(eff.branches, eff.depth) == 85


def test_s1_flat_raises_rate():
    prof = ClientProfile(name="a", rate=3.0, misbehavior="S1", s1_factor=2.0)
    assert apply_misbehavior(prof, PARAMS).rate == 6.0


def test_no_misbehavior_unchanged():
    prof = ClientProfile(name="a", rate=3.0, prefix_len=50)
    assert apply_misbehavior(prof, PARAMS) == prof


def test_profile_validation_depth_budget():
    with pytest.raises(ValueError):
        ClientProfile(name="a", program="tree", depth=10, prefix_len=4000, suffix_len=100).validate(PARAMS)
    with pytest.raises(ValueError):
        ClientProfile(name="a", rate=0).validate(PARAMS)
    with pytest.raises(ValueError):
        ClientProfile(name="a", output_len=2048).validate(PARAMS)


def test_trace_is_valid_and_deterministic():
    profs = [
        ClientProfile(name="a", rate=5, program="tree", branches=2, depth=2, prefix_len=60, suffix_len=8),
        ClientProfile(name="b", rate=8, prefix_len=30, suffix_len=6, output_dist="lognormal"),
    ]
    t1 = generate_trace(profs, PARAMS, seed=9, horizon=seconds(5))
    t2 = generate_trace(profs, PARAMS, seed=9, horizon=seconds(5))
    assert t1.records == t2.records
    t1.validate(PARAMS)
    t3 = generate_trace(profs, PARAMS, seed=10, horizon=seconds(5))
    assert t3.records != t1.records
