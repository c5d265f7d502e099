"""Kernel selection: compiled extension if available, pure Python otherwise.

Set FAIRSCHED_PURE_PYTHON=1 to force the fallback (used by the benchmark
to compare both implementations).
"""
import os

if os.environ.get("FAIRSCHED_PURE_PYTHON") == "1":
    from ._speedups_py import common_prefix_len

    KERNEL_IMPL = "python"
else:
    try:
        from ._speedups import common_prefix_len  # type: ignore[attr-defined]

        KERNEL_IMPL = "cython"
    except ImportError:
        from ._speedups_py import common_prefix_len

        KERNEL_IMPL = "python"

__all__ = ["common_prefix_len", "KERNEL_IMPL"]
