"""Pure-Python fallback for the compiled prefix-compare kernel."""


def common_prefix_len(a, a_off, b, b_off):
    """Length of the common prefix of a[a_off:] and b[b_off:]."""
    n = min(len(a) - a_off, len(b) - b_off)
    i = 0
    while i < n and a[a_off + i] == b[b_off + i]:
        i += 1
    return i
