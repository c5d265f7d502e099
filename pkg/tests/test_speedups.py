import subprocess
import sys

from hypothesis import given
from hypothesis import strategies as st

from fairsched._speedups_py import common_prefix_len as py_kernel
from fairsched.speedups import KERNEL_IMPL, common_prefix_len


def test_basic_cases():
    assert common_prefix_len((1, 2, 3), 0, (1, 2, 9), 0) == 2
    assert common_prefix_len((1, 2, 3), 0, (1, 2, 3), 0) == 3
    assert common_prefix_len((), 0, (1,), 0) == 0
    assert common_prefix_len((5, 1, 2), 1, (9, 9, 1, 2), 2) == 2


@given(
    st.lists(st.integers(min_value=0, max_value=3), max_size=30),
    st.lists(st.integers(min_value=0, max_value=3), max_size=30),
)
def test_matches_pure_python(a, b):
    a, b = tuple(a), tuple(b)
    for a_off in range(len(a) + 1):
        for b_off in range(len(b) + 1):
            got = common_prefix_len(a, a_off, b, b_off)
            assert got == py_kernel(a, a_off, b, b_off)
            # definition check
            n = got
            assert a[a_off : a_off + n] == b[b_off : b_off + n]
            if a_off + n < len(a) and b_off + n < len(b):
                assert a[a_off + n] != b[b_off + n]


def test_env_var_forces_python_fallback():
    out = subprocess.run(
        [sys.executable, "-c", "from fairsched.speedups import KERNEL_IMPL; print(KERNEL_IMPL)"],
        env={"FAIRSCHED_PURE_PYTHON": "1", "PATH": "/usr/bin:/bin"},
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "python"


def test_kernel_impl_is_reported():
    assert KERNEL_IMPL in ("cython", "python")
