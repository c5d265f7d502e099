# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled hot kernel: token-sequence prefix comparison.

Prefix matching against the radix cache runs once per admission probe and
once per queue-sort key, over inputs that can be tens of thousands of
tokens, so the inner compare loop dominates simulator runtime on
prefix-heavy workloads.
"""


def common_prefix_len(a, Py_ssize_t a_off, b, Py_ssize_t b_off):
    """Length of the common prefix of a[a_off:] and b[b_off:]."""
    cdef Py_ssize_t la = len(a)
    cdef Py_ssize_t lb = len(b)
    cdef Py_ssize_t n = la - a_off
    cdef Py_ssize_t m = lb - b_off
    if m < n:
        n = m
    cdef Py_ssize_t i = 0
    while i < n and a[a_off + i] == b[b_off + i]:
        i += 1
    return i
