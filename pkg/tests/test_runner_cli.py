import os

import pytest
import yaml

from fairsched import cli
from fairsched.requests import SystemParams
from fairsched.runner import (
    ConfigError,
    ExperimentConfig,
    SchedulingConfig,
    config_from_yaml,
    config_to_yaml,
    run_experiment,
    summarize,
    verify_run,
    write_artifacts,
)
from fairsched.workload import ClientProfile

ARTIFACTS = [
    "events.jsonl",
    "service.csv",
    "dispatch.csv",
    "worker_metrics.csv",
    "bounds.csv",
    "summary.yaml",
    "effective_config.yaml",
    "trace.jsonl",
]


def small_config(**kw):
    base = dict(
        seed=5,
        horizon_ms=300,
        params=SystemParams(L_input=128, L_output=32, M=512, D=1),
        scheduling=SchedulingConfig(local_policy="fcfs", output_reserve=8),
        clients=[ClientProfile(name="solo", rate=15, prefix_len=60, suffix_len=10, output_len=6)],
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_yaml_roundtrip():
    cfg = small_config(
        scheduling=SchedulingConfig(local_policy="dlpm", global_policy="d2lpm", q_u=500, q_w_frac=2.0),
        params=SystemParams(L_input=128, L_output=32, M=512, D=3),
        clients=[
            ClientProfile(name="a", rate=5, program="tree", branches=2, depth=1, prefix_len=40, suffix_len=8),
            ClientProfile(name="b", rate=5, prefix_len=60, suffix_len=10, misbehavior="S1"),
        ],
    )
    assert config_from_yaml(config_to_yaml(cfg)) == cfg


def test_invalid_config_lists_offending_fields():
    text = yaml.safe_dump(
        {
            "horizon_ms": -1,
            "bogus_key": 1,
            "params": {"M": 16, "L_input": 128},
            "scheduling": {"local_policy": "nope", "theta": 7},
            "clients": [{"name": "a", "rate": -2}],
        }
    )
    with pytest.raises(ConfigError) as exc:
        config_from_yaml(text)
    msg = str(exc.value)
    for needle in ("bogus_key", "horizon_ms", "local_policy", "theta"):
        assert needle in msg


def test_quantum_resolution():
    cfg = small_config()
    assert cfg.U == 1 * 128 + 2 * 512
    cfg.scheduling.q_u_frac = 0.5
    assert cfg.resolve_q_u() == round(0.5 * cfg.U)
    cfg.scheduling.q_u = 77
    assert cfg.resolve_q_u() == 77


def test_minimal_fcfs_smoke_artifacts(tmp_path):
    cfg = small_config()
    result = run_experiment(cfg)
    reports = verify_run(result)
    out = str(tmp_path / "run")
    summary = write_artifacts(result, reports, out)
    for name in ARTIFACTS:
        assert os.path.exists(os.path.join(out, name)), name
    with open(os.path.join(out, "summary.yaml")) as fh:
        parsed = yaml.safe_load(fh)
    assert parsed["n_requests"] == summary["n_requests"] > 0
    assert parsed["n_finished"] == parsed["n_requests"]
    assert 0 <= parsed["cache_hit_rate"] <= 1


def test_identical_runs_byte_identical_artifacts(tmp_path):
    cfg_a = small_config()
    cfg_b = small_config()
    out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
    ra = run_experiment(cfg_a)
    rb = run_experiment(cfg_b)
    write_artifacts(ra, verify_run(ra), out_a)
    write_artifacts(rb, verify_run(rb), out_b)
    for name in ARTIFACTS:
        with open(os.path.join(out_a, name), "rb") as fa, open(os.path.join(out_b, name), "rb") as fb:
            assert fa.read() == fb.read(), name


def test_every_verifier_emits_exactly_one_report():
    result = run_experiment(small_config())
    theorems = [r.theorem for r in verify_run(result)]
    assert len(theorems) == len(set(theorems))
    assert "work-conservation" in theorems and "pool-safety" in theorems


def test_children_released_at_parent_finish():
    cfg = small_config(
        clients=[
            ClientProfile(
                name="t", rate=4, program="tree", branches=2, depth=1,
                prefix_len=40, suffix_len=8, output_len=4,
            )
        ],
        scheduling=SchedulingConfig(local_policy="lpm", output_reserve=4),
    )
    result = run_experiment(cfg)
    lc = result.lifecycle
    for rid, rec in lc.items():
        if rec.get("parent"):
            parent = lc[rec["parent"]]
            assert rec["arrival_time"] == parent["finish_time"]


def test_summary_throughput_and_jain_present():
    cfg = small_config(
        clients=[
            ClientProfile(name="a", rate=10, prefix_len=60, suffix_len=10, output_len=6),
            ClientProfile(name="b", rate=10, prefix_len=60, suffix_len=10, output_len=6),
        ]
    )
    s = summarize(run_experiment(cfg))
    assert s["throughput_units_per_s"] > 0
    assert s["jain_index"] is None or 0.5 <= s["jain_index"] <= 1.0


# -- CLI ---------------------------------------------------------------------


def write_cfg(tmp_path, cfg):
    p = tmp_path / "cfg.yaml"
    p.write_text(config_to_yaml(cfg))
    return str(p)


def test_cli_run_and_verify_roundtrip(tmp_path, capsys):
    path = write_cfg(tmp_path, small_config())
    out = str(tmp_path / "run")
    assert cli.main(["run", "--config", path, "--out", out]) == 0
    assert cli.main(["verify", "--run-dir", out]) == 0
    stdout = capsys.readouterr().out
    assert "replay hash matches" in stdout
    assert "work-conservation" in stdout


def test_cli_compare_rows_share_request_count(tmp_path, capsys):
    cfg = small_config(
        scheduling=SchedulingConfig(local_policy="dlpm", output_reserve=8),
        clients=[
            ClientProfile(name="a", rate=10, prefix_len=60, suffix_len=10, output_len=6),
            ClientProfile(name="b", rate=10, prefix_len=60, suffix_len=10, output_len=6),
        ],
    )
    path = write_cfg(tmp_path, cfg)
    out = str(tmp_path / "cmp")
    assert cli.main(["compare", "--config", path, "--local", "dlpm,lpm,vtc", "--out", out]) == 0
    counts = set()
    for pol in ("dlpm", "lpm", "vtc"):
        with open(os.path.join(out, pol, "summary.yaml")) as fh:
            counts.add(yaml.safe_load(fh)["n_requests"])
    assert len(counts) == 1


def test_cli_sweep_one_row_per_point(tmp_path, capsys):
    cfg = small_config(scheduling=SchedulingConfig(local_policy="dlpm", output_reserve=8))
    path = write_cfg(tmp_path, cfg)
    assert cli.main(["sweep", "--config", path, "--q-u-fracs", "0.1,0.5,1,4"]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.strip()]
    assert len(lines) == 1 + 4  # header plus one row per swept point


def test_cli_gen_trace(tmp_path):
    path = write_cfg(tmp_path, small_config())
    out = str(tmp_path / "trace.jsonl")
    assert cli.main(["gen-trace", "--config", path, "--out", out]) == 0
    assert os.path.getsize(out) > 0
