import pytest

from fairsched.accounting import CostWeights, ServiceLog, compute_U
from fairsched.requests import SystemParams


def test_compute_U_reference_defaults():
    assert compute_U(SystemParams(L_input=4096, M=16384, w_e=1, w_q=2)) == 36864


def test_compute_U_degenerate_weights():
    assert compute_U(SystemParams(w_e=0, w_q=0)) == 0


def test_compute_U_linearity_in_M():
    base = SystemParams(L_input=4096, M=8192)
    doubled = SystemParams(L_input=4096, M=16384)
    assert compute_U(doubled) - compute_U(base) == 2 * 8192


def test_no_activity_is_zero_service():
    log = ServiceLog(CostWeights())
    assert log.service_in_interval("a", 0, 100) == 0


def test_weighted_service_sum():
    log = ServiceLog(CostWeights(w_e=1, w_q=2))
    log.add_extend(10, "a", 100, 100)
    log.add_output(20, "a", 50)
    assert log.service_in_interval("a", 0, 100) == 1 * 100 + 2 * 50


def test_interval_additivity_at_admission_instant():
    log = ServiceLog(CostWeights())
    log.add_extend(10, "a", 40, 40)
    log.add_output(30, "a", 5)
    whole = log.service_in_interval("a", 0, 100)
    assert log.service_in_interval("a", 0, 10) + log.service_in_interval("a", 10, 100) == whole
    assert log.service_in_interval("a", 0, 30) + log.service_in_interval("a", 30, 100) == whole


def test_half_open_interval_semantics():
    log = ServiceLog(CostWeights())
    log.add_extend(10, "a", 40, 40)
    assert log.service_in_interval("a", 0, 10) == 0
    assert log.service_in_interval("a", 10, 11) == 40


def test_client_perspective_full_hit():
    log = ServiceLog(CostWeights(w_e=1, w_q=2))
    log.add_extend(0, "a", 0, 100)  # full cache hit: zero extend tokens
    log.add_output(5, "a", 10)
    assert log.service_in_interval("a", 0, 100) == 20
    assert log.client_perspective_service("a", 0, 100) == 120


def test_client_perspective_coincides_on_cold_cache():
    log = ServiceLog(CostWeights())
    log.add_extend(0, "a", 100, 100)
    log.add_output(5, "a", 10)
    assert log.service_in_interval("a", 0, 100) == log.client_perspective_service("a", 0, 100)


def test_client_perspective_never_below_actual():
    log = ServiceLog(CostWeights())
    for t, ext, inp in [(0, 30, 100), (5, 0, 70), (9, 70, 70)]:
        log.add_extend(t, "a", ext, inp)
    log.add_output(12, "a", 3)
    assert log.client_perspective_service("a", 0, 50) >= log.service_in_interval("a", 0, 50)


def test_rejects_unordered_and_negative():
    log = ServiceLog(CostWeights())
    log.add_extend(10, "a", 5, 5)
    with pytest.raises(ValueError):
        log.add_extend(9, "a", 5, 5)
    with pytest.raises(ValueError):
        log.add_output(11, "a", -1)
    with pytest.raises(ValueError):
        log.service_in_interval("a", 5, 4)
    with pytest.raises(ValueError):
        CostWeights(w_e=-1)


def test_csv_has_both_service_columns():
    log = ServiceLog(CostWeights(w_e=1, w_q=2))
    log.add_extend(0, "a", 10, 25)
    out = log.to_csv()
    assert out.splitlines()[0] == "time,client,kind,units,client_units"
    assert "0,a,extend,10,25" in out
