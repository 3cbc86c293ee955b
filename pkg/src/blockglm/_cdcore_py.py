"""Pure-Python/NumPy fallback for the coordinate descent inner loop.

Mirrors the compiled kernel coordinate for coordinate; the per-column partial
sums use NumPy reductions, so results agree with the compiled kernel to
rounding (not bitwise). Each backend is bitwise reproducible against itself.
"""

from __future__ import annotations

import time

import numpy as np


def cd_cycle(
    indptr: np.ndarray,
    rows: np.ndarray,
    vals: np.ndarray,
    g: np.ndarray,
    w: np.ndarray,
    beta: np.ndarray,
    delta: np.ndarray,
    d: np.ndarray,
    mu: float,
    nu: float,
    lam1: float,
    lam2: float,
    start: int,
    count: int,
    stop_flag: np.ndarray,
    coordinate_delay: float = 0.0,
) -> tuple[int, int]:
    F = beta.shape[0]
    visited = 0
    j = int(start)
    while visited < count:
        if stop_flag[0]:
            break
        if coordinate_delay > 0.0:
            time.sleep(coordinate_delay)
        lo, hi = int(indptr[j]), int(indptr[j + 1])
        r = rows[lo:hi]
        x = vals[lo:hi]
        wr = w[r]
        s1 = float(x @ (-g[r] - mu * wr * d[r]))
        s2 = float(wr @ (x * x))
        bj = beta[j] + delta[j]
        num = s1 + mu * s2 * bj + nu * beta[j]
        den = mu * s2 + lam2 + nu
        if num > lam1:
            shrunk = num - lam1
        elif num < -lam1:
            shrunk = num + lam1
        else:
            shrunk = 0.0
        new_total = shrunk / den - beta[j]
        step = new_total - delta[j]
        if step != 0.0:
            delta[j] = new_total
            d[r] += step * x
        visited += 1
        j += 1
        if j == F:
            j = 0
    return visited, j
