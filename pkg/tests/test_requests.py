import pytest

from fairsched.requests import (
    Request,
    SystemParams,
    Trace,
    TraceRecord,
    expand_tokens,
    extend_length,
)


def test_extend_length_cold_cache():
    assert extend_length(100, 0) == 100


def test_extend_length_full_hit():
    assert extend_length(100, 100) == 0


def test_extend_length_typical_tree_prefix():
    assert extend_length(546, 500) == 46


def test_extend_length_rejects_out_of_range():
    with pytest.raises(ValueError):
        extend_length(100, 101)
    with pytest.raises(ValueError):
        extend_length(100, -1)


def test_params_validation():
    SystemParams().validate()
    with pytest.raises(ValueError):
        SystemParams(M=0).validate()
    with pytest.raises(ValueError):
        SystemParams(L_input=100, M=100).validate()  # no room for a token
    with pytest.raises(ValueError):
        SystemParams(w_e=-1).validate()


def test_expand_tokens_deterministic_and_prefix_stable():
    a = expand_tokens("ns", 20)
    b = expand_tokens("ns", 35)
    assert len(a) == 20 and len(b) == 35
    assert b[:20] == a
    assert expand_tokens("other", 20) != a


def test_request_has_no_output_length_field():
    # Schedulers are output-length-oblivious by construction.
    assert "true_output_len" not in Request.__dataclass_fields__
    assert not any("output" in f for f in Request.__dataclass_fields__)


def test_trace_roundtrip(tmp_path):
    recs = [
        TraceRecord("a-0", "a", 0, 12, "pfx:a", 8, 4),
        TraceRecord("a-0.0", "a", 0, 16, "req:a-0", 12, 4, parent_id="a-0"),
    ]
    trace = Trace(recs)
    p = tmp_path / "t.jsonl"
    trace.save(str(p))
    loaded = Trace.load(str(p))
    assert loaded.records == recs


def test_materialize_parent_chain_sharing():
    recs = [
        TraceRecord("a-0", "a", 0, 12, "pfx:a", 8, 4),
        TraceRecord("a-0.0", "a", 0, 16, "req:a-0", 12, 4, parent_id="a-0"),
        TraceRecord("b-0", "b", 5, 12, "pfx:b", 8, 4),
    ]
    reqs, output_lens = Trace(recs).materialize()
    by_rid = {r.rid: r for r in reqs}
    child = by_rid["a-0.0"]
    assert child.input_tokens[:12] == by_rid["a-0"].input_tokens
    assert child.input_tokens[12:] != by_rid["a-0"].input_tokens[:4]
    assert by_rid["b-0"].input_tokens[:8] != by_rid["a-0"].input_tokens[:8]
    assert output_lens == {"a-0": 4, "a-0.0": 4, "b-0": 4}
    assert child.parent == "a-0"


def test_shared_prefix_id_gives_identical_prefixes():
    recs = [
        TraceRecord("a-0", "a", 0, 12, "pfx:a", 8, 4),
        TraceRecord("a-1", "a", 3, 12, "pfx:a", 8, 4),
    ]
    reqs, _ = Trace(recs).materialize()
    assert reqs[0].input_tokens[:8] == reqs[1].input_tokens[:8]
    assert reqs[0].input_tokens[8:] != reqs[1].input_tokens[8:]


def test_trace_validate_rejects_bad_traces():
    params = SystemParams(L_input=64, L_output=16, M=256)
    with pytest.raises(ValueError):
        Trace([TraceRecord("x", "a", 5, 10, "p", 0, 1), TraceRecord("y", "a", 4, 10, "p", 0, 1)]).validate(params)
    with pytest.raises(ValueError):
        Trace([TraceRecord("x", "a", 0, 10, "req:missing", 5, 1, parent_id="missing")]).validate(params)
    with pytest.raises(ValueError):
        Trace([TraceRecord("x", "a", 0, 100, "p", 0, 1)]).validate(params)
    with pytest.raises(ValueError):
        Trace([TraceRecord("x", "a", 0, 10, "p", 0, 0)]).validate(params)
