"""Benchmark the edge-scatter kernel: compiled extension vs numpy fallback.

Times out[rows[i]] += vals[i] * x[cols[i]] over random edge lists at a
fixed average degree, checks that both backends agree bitwise, and
prints a small table with the speedup.

Run from the repository root:

    python3 benchmarks/bench_edge_kernels.py --nodes 1000 4000 16000
"""

import argparse
import time

import numpy as np

from advdiff.kernels import _coo_scatter_matmul_numpy

try:
    from advdiff._edge_kernels import coo_scatter_matmul as compiled_kernel
except ImportError:
    compiled_kernel = None


def make_case(n, degree, width, seed):
    rng = np.random.default_rng(seed)
    m = n * degree
    rows = rng.integers(0, n, size=m).astype(np.int64)
    cols = rng.integers(0, n, size=m).astype(np.int64)
    vals = rng.random(m)
    x = rng.random((n, width))
    return rows, cols, vals, x


def best_of(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nodes", type=int, nargs="+", default=[1000, 4000, 16000])
    parser.add_argument("--degree", type=int, default=8, help="edges per node")
    parser.add_argument("--width", type=int, default=32, help="feature columns")
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if compiled_kernel is None:
        print("compiled extension not available; timing the numpy fallback only")
    print(f"{'n':>8} {'edges':>9} {'numpy ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for n in args.nodes:
        rows, cols, vals, x = make_case(n, args.degree, args.width, args.seed)
        call = (rows, cols, vals, x, n)
        t_numpy = best_of(_coo_scatter_matmul_numpy, call, args.repeats)
        if compiled_kernel is None:
            print(f"{n:>8} {len(rows):>9} {t_numpy * 1e3:>10.3f} {'-':>12} {'-':>8}")
            continue
        t_compiled = best_of(compiled_kernel, call, args.repeats)
        ref = _coo_scatter_matmul_numpy(*call)
        got = compiled_kernel(*call)
        if not np.array_equal(ref, got):
            raise SystemExit(f"backends disagree at n={n}")
        print(
            f"{n:>8} {len(rows):>9} {t_numpy * 1e3:>10.3f} "
            f"{t_compiled * 1e3:>12.3f} {t_numpy / t_compiled:>8.2f}"
        )


if __name__ == "__main__":
    main()
