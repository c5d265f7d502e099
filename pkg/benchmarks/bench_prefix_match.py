"""Benchmark the common_prefix_len kernel: compiled extension vs pure Python.

The kernel sits on the hot path of every radix-tree walk (dispatch probes,
admission matches, eviction splits), so both implementations are timed on
the same randomly generated token sequences.

Usage:
    python benchmarks/bench_prefix_match.py [--pairs 2000] [--length 4096] [--repeat 5]
"""
import argparse
import random
import statistics
import timeit


def make_pairs(n_pairs, length, seed):
    rng = random.Random(seed)
    pairs = []
    for _ in range(n_pairs):
        a = tuple(rng.randrange(50000) for _ in range(length))
        shared = rng.randrange(length + 1)
        b = a[:shared] + tuple(rng.randrange(50000) for _ in range(length - shared))
        pairs.append((a, b))
    return pairs


def bench(func, pairs, repeat):
    def work():
        total = 0
        for a, b in pairs:
            total += func(a, 0, b, 0)
        return total

    times = timeit.repeat(work, number=1, repeat=repeat)
    return min(times), statistics.median(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--pairs", type=int, default=2000, help="number of sequence pairs")
    parser.add_argument("--length", type=int, default=4096, help="tokens per sequence")
    parser.add_argument("--repeat", type=int, default=5, help="timing repetitions")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    from fairsched._speedups_py import common_prefix_len as py_kernel

    impls = [("python", py_kernel)]
    try:
        from fairsched._speedups import common_prefix_len as cy_kernel

        impls.append(("cython", cy_kernel))
    except ImportError:
        print("compiled extension not available; benchmarking pure Python only")

    pairs = make_pairs(args.pairs, args.length, args.seed)
    expected = [impls[0][1](a, 0, b, 0) for a, b in pairs]
    for name, func in impls[1:]:
        got = [func(a, 0, b, 0) for a, b in pairs]
        assert got == expected, f"{name} kernel disagrees with reference"

    tokens = sum(len(a) for a, _ in pairs)
    results = {}
    print(f"{args.pairs} pairs x {args.length} tokens, best of {args.repeat}")
    for name, func in impls:
        best, median = bench(func, pairs, args.repeat)
        results[name] = best
        print(f"  {name:7s} best {best * 1e3:8.2f} ms  median {median * 1e3:8.2f} ms  "
              f"({tokens / best / 1e6:7.1f} Mtok/s)")
    if len(results) == 2:
        print(f"  speedup: {results['python'] / results['cython']:.1f}x (cython over python)")


if __name__ == "__main__":
    main()
