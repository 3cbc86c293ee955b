"""Benchmark the compiled coordinate descent kernel against the NumPy
fallback on a synthetic sparse block.

Usage: python3 benchmarks/bench_kernels.py [--n N] [--p P] [--density D]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from blockglm import _cdcore_py

try:
    from blockglm import _cdcore
except ImportError:
    _cdcore = None


def make_block(rng, n, p, density):
    cols = []
    for _ in range(p):
        k = max(1, rng.binomial(n, density))
        rows = np.sort(rng.choice(n, size=k, replace=False)).astype(np.int64)
        vals = rng.normal(size=k)
        cols.append((rows, vals))
    indptr = np.zeros(p + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(r) for r, _ in cols])
    rows = np.concatenate([r for r, _ in cols])
    vals = np.concatenate([v for _, v in cols])
    return indptr, rows, vals


def run(kernel, indptr, rows, vals, g, w, n, p, cycles):
    beta = np.zeros(p)
    delta = np.zeros(p)
    d = np.zeros(n)
    stop = np.zeros(1, dtype=np.int8)
    t0 = time.perf_counter()
    for _ in range(cycles):
        delta[:] = 0.0
        d[:] = 0.0
        kernel.cd_cycle(indptr, rows, vals, g, w, beta, delta, d,
                        1.0, 1e-6, 0.1, 0.1, 0, p, stop)
    elapsed = time.perf_counter() - t0
    return elapsed, delta, d


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=20_000)
    ap.add_argument("--p", type=int, default=2_000)
    ap.add_argument("--density", type=float, default=0.01)
    ap.add_argument("--cycles", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    indptr, rows, vals = make_block(rng, args.n, args.p, args.density)
    g = rng.normal(size=args.n)
    w = rng.uniform(0.0, 0.25, size=args.n)
    print(f"n={args.n} p={args.p} nnz={len(vals)} cycles={args.cycles}")

    t_py, delta_py, d_py = run(_cdcore_py, indptr, rows, vals, g, w,
                               args.n, args.p, args.cycles)
    print(f"python kernel: {t_py:.3f}s")
    if _cdcore is None:
        print("compiled kernel not built; install with the Cython extension")
        return
    t_cy, delta_cy, d_cy = run(_cdcore, indptr, rows, vals, g, w,
                               args.n, args.p, args.cycles)
    rel = np.max(np.abs(delta_py - delta_cy)) / (1.0 + np.max(np.abs(delta_cy)))
    print(f"cython kernel: {t_cy:.3f}s  speedup x{t_py / t_cy:.1f}  "
          f"max rel diff {rel:.2e}")


if __name__ == "__main__":
    main()
