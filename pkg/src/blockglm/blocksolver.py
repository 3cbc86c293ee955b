"""Per-node penalized quadratic subproblem: one (or more) cyclic coordinate
descent passes over the node's feature block."""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import kernels
from .losses import ElasticNetPenalty, WorkingSet
from .runtime import StopSignal
from .shards import BlockCursor, BlockDelta, FeatureShard


def soft_threshold(x: float, a: float) -> float:
    """sgn(x) * max(|x| - a, 0); the proximal map of a*|.|."""
    if a < 0.0:
        raise ValueError("threshold must be nonnegative")
    if x > a:
        return x - a
    if x < -a:
        return x + a
    return 0.0


def coordinate_delta(
    column: tuple[np.ndarray, np.ndarray],
    working: WorkingSet,
    local_margin_delta: np.ndarray,
    beta_j: float,
    delta_beta_j: float,
    mu: float,
    nu: float,
    penalty: ElasticNetPenalty,
) -> float:
    """Closed-form minimizer of the 1-d restriction of the block subproblem.

    Returns the new *total* step for coordinate j (replacing ``delta_beta_j``),
    using the z-free form: with d the current block margin delta,

        num = sum_i x_ij * (-g_i - mu*w_i*d_i + mu*w_i*(beta_j+delta_j)*x_ij)
              + nu*beta_j
        den = mu * sum_i w_i x_ij^2 + lambda2 + nu

        delta_j* = T(num, lambda1) / den - beta_j.

    ``den`` is strictly positive because nu > 0.
    """
    rows, vals = column
    wr = working.w[rows]
    s1 = float(vals @ (-working.g[rows] - mu * wr * local_margin_delta[rows]))
    s2 = float(wr @ (vals * vals))
    num = s1 + mu * s2 * (beta_j + delta_beta_j) + nu * beta_j
    den = mu * s2 + penalty.lambda2 + nu
    return soft_threshold(num, penalty.lambda1) / den - beta_j


_NO_STOP = np.zeros(1, dtype=np.int8)


def solve_block(
    shard: FeatureShard,
    working: WorkingSet,
    beta_m: np.ndarray,
    penalty: ElasticNetPenalty,
    mu: float,
    nu: float,
    cursor: BlockCursor,
    stop: StopSignal | None = None,
    *,
    alb: bool = False,
    on_pass_complete: Callable[[], None] | None = None,
    coordinate_delay: float = 0.0,
) -> BlockDelta:
    """One block solve at the current working set.

    BSP (``alb=False``): exactly one full cycle over the block, starting at the
    cursor; the cursor returns to its starting position.

    ALB (``alb=True``): coordinates are visited cyclically until ``stop``
    fires, checked once per coordinate; complete passes are reported through
    ``on_pass_complete`` and extra cycles are allowed. The cursor is left at
    the first unvisited coordinate so the next iteration resumes there.
    """
    F = shard.num_local_features
    delta = np.zeros(F)
    d = np.zeros(shard.n)
    cursor.start_iteration()
    if F > 0:
        if not alb:
            visited, nxt = kernels.cd_cycle(
                shard.indptr, shard.rows, shard.vals,
                working.g, working.w, beta_m, delta, d,
                mu, nu, penalty.lambda1, penalty.lambda2,
                cursor.next_index, F, _NO_STOP,
                coordinate_delay,
            )
            cursor.visited_this_iteration = visited
            cursor.passes_completed_this_iteration = 1
            cursor.total_passes += 1
            cursor.next_index = nxt
        else:
            if stop is None:
                raise ValueError("ALB mode requires a stop signal")
            while not stop.fired:
                remaining = F
                visited, nxt = kernels.cd_cycle(
                    shard.indptr, shard.rows, shard.vals,
                    working.g, working.w, beta_m, delta, d,
                    mu, nu, penalty.lambda1, penalty.lambda2,
                    cursor.next_index, remaining, stop.flag,
                    coordinate_delay,
                )
                cursor.visited_this_iteration += visited
                cursor.next_index = nxt
                if visited == remaining:
                    cursor.passes_completed_this_iteration += 1
                    cursor.total_passes += 1
                    if on_pass_complete is not None:
                        on_pass_complete()
                else:
                    break

    quad = float(working.w @ (d * d) + nu * (delta @ delta))
    return BlockDelta(delta_beta=delta, local_margin_delta=d, quad_form=quad)


def block_quadratic_form(delta: BlockDelta, mu: float) -> float:
    """Finalize the block's quadratic term: mu * (sum_i w_i d_i^2 + nu ||dbeta||^2)."""
    return mu * delta.quad_form
