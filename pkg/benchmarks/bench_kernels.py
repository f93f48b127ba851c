"""Timing comparison between the compiled kernels and the numpy fallback.

Run as: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import importlib
import time

import numpy as np

from lingualign import _kernels_py


def timeit(fn, args, repeats):
    fn(*args)  # warm-up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    try:
        cython = importlib.import_module("lingualign._kernels")
    except ImportError:
        print("compiled kernels not built; nothing to compare")
        return

    rng = np.random.default_rng(0)
    cases = []
    for n in (32, 128, 512):
        a = rng.normal(size=(n, n))
        b = rng.normal(size=(n, n))
        cases.append((f"matmul {n}x{n}", "matmul", (a, b)))
    for n in (1_000, 100_000):
        x = rng.normal(size=(n // 10, 10))
        cases.append((f"silu {n}", "silu", (x,)))
        cases.append((f"gelu {n}", "gelu", (x,)))
    cases.append(("softmax 5000x32", "softmax_rows", (rng.normal(size=(5000, 32)),)))

    print(f"{'case':<18} {'python':>12} {'cython':>12} {'speedup':>8}")
    for label, name, data in cases:
        t_py = timeit(getattr(_kernels_py, name), data, args.repeats)
        t_cy = timeit(getattr(cython, name), data, args.repeats)
        print(f"{label:<18} {t_py * 1e3:>10.3f}ms {t_cy * 1e3:>10.3f}ms {t_py / t_cy:>7.2f}x")


if __name__ == "__main__":
    main()
