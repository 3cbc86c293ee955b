"""Outer solver loop: parallel block solves merged through reductions, a
grid-seeded Armijo line search, the trust-region multiplier schedule, and the
convergence decision.

Every worker runs this code collectively (SPMD): the reduction calls below
happen in the same order on all ranks, and every scalar a branch depends on is
a reduced value, so all ranks take identical decisions.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .blocksolver import solve_block
from .errors import LineSearchError
from .losses import (
    BINARY_LOSSES,
    ElasticNetPenalty,
    LOGISTIC,
    LossFunction,
    WorkingSet,
    compute_working_set,
    penalty_value,
    total_loss,
)
from .shards import BlockCursor, FeatureShard


@dataclass
class SolverConfig:
    """All solver hyperparameters.

    Defaults follow the method's reference settings: backtracking factor 0.5,
    sufficient-decrease constant 0.01, gamma 0, eta1 = eta2 = 2, kappa 0.75 and
    an initial trust-region multiplier of 1.
    """

    loss: LossFunction = LOGISTIC
    lambda1: float = 0.0
    lambda2: float = 0.0
    nu: float = 1e-6
    eta1: float = 2.0
    eta2: float = 2.0
    b: float = 0.5
    sigma: float = 0.01
    gamma: float = 0.0
    delta: float = 1e-3
    kappa: float = 0.75
    mode: str = "bsp"  # "bsp" | "alb"
    mu0: float = 1.0
    mu_adaptive: bool = True
    max_outer: int = 100
    tol: float = 1e-8
    alpha_grid_size: int = 8
    max_backtracks: int = 50

    def __post_init__(self):
        if self.mode not in ("bsp", "alb"):
            raise ValueError("mode must be 'bsp' or 'alb'")
        if self.nu <= 0.0:
            raise ValueError("nu must be positive")
        if not (0.0 < self.b < 1.0 and 0.0 < self.sigma < 1.0):
            raise ValueError("need 0 < b < 1 and 0 < sigma < 1")
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError("need 0 <= gamma < 1")
        if self.eta1 < 1.0 or self.eta2 < 1.0:
            raise ValueError("eta1 and eta2 must be >= 1")
        if self.mu0 <= 0.0:
            raise ValueError("mu0 must be positive")

    @property
    def penalty(self) -> ElasticNetPenalty:
        return ElasticNetPenalty(self.lambda1, self.lambda2)


@dataclass
class ModelState:
    """Local weights plus the replicated, synchronized margin vector."""

    beta_m: np.ndarray
    margins: np.ndarray
    mu: float = 1.0


@dataclass
class IterationStats:
    iteration: int
    objective: float
    alpha: float
    mu: float
    nnz: int
    wall_time: float
    reduce_bytes: int
    delta_zero: bool = field(default=False)


def directional_D(
    working: WorkingSet,
    global_margin_delta: np.ndarray,
    penalty_new_minus_old: float,
    quad_form_total: float,
    gamma: float,
) -> float:
    """Sufficient-decrease directional value:
    grad(L)^T dbeta + gamma * dbeta^T (mu (Htilde + nu I)) dbeta + R(beta+dbeta) - R(beta).

    The gradient term is sum_i g_i * (X dbeta)_i since grad(L) = X^T g.
    """
    return float(
        working.g @ global_margin_delta
        + gamma * quad_form_total
        + penalty_new_minus_old
    )


def adapt_mu(mu: float, alpha: float, eta1: float, eta2: float) -> float:
    """Inflate the trust-region multiplier after a shortened step, relax it
    (floored at 1) after a full step."""
    if alpha < 1.0:
        return eta1 * mu
    return max(1.0, mu / eta2)


def line_search(
    f0: float,
    evaluate_batch: Callable[[Sequence[float]], np.ndarray],
    D: float,
    config: SolverConfig,
    f_at_one: float | None = None,
) -> tuple[float, float]:
    """Armijo line search over the merged direction.

    ``evaluate_batch`` maps a list of step sizes to objective values and must
    be deterministic and identical across ranks. The full step is tried first;
    on rejection the starting point is the objective argmin over a fixed
    logarithmic grid in (delta, 1], then backtracked by factor b.

    Returns (alpha, f(beta + alpha * dbeta)).
    """
    sigma_D = config.sigma * D
    if f_at_one is None:
        f_at_one = float(evaluate_batch([1.0])[0])
    if f_at_one <= f0 + sigma_D:
        return 1.0, f_at_one

    grid = np.geomspace(config.delta, 1.0, config.alpha_grid_size + 1)[1:]
    f_grid = np.asarray(evaluate_batch(grid), dtype=np.float64)
    alpha_init = float(grid[int(np.argmin(f_grid))])

    candidates = alpha_init * config.b ** np.arange(config.max_backtracks)
    f_cand = np.asarray(evaluate_batch(candidates), dtype=np.float64)
    for j in range(config.max_backtracks):
        if f_cand[j] <= f0 + candidates[j] * sigma_D:
            return float(candidates[j]), float(f_cand[j])

    raise LineSearchError(
        "no step satisfied the sufficient-decrease rule",
        diagnostics={
            "f0": f0,
            "D": D,
            "alpha_init": alpha_init,
            "best_candidate_objective": float(f_cand.min()),
            "max_backtracks": config.max_backtracks,
        },
    )


def outer_step(
    state: ModelState,
    shard: FeatureShard,
    config: SolverConfig,
    transport,
    cursor: BlockCursor,
    *,
    epoch: int = 0,
    monitor=None,
    coordinate_delay: float = 0.0,
) -> IterationStats:
    """One collective outer iteration; all ranks finish with identical margins
    and mu."""
    t_start = time.perf_counter()
    bytes_before = transport.bytes_reduced
    penalty = config.penalty
    labels = shard.labels

    working = compute_working_set(config.loss, labels, state.margins)

    alb = config.mode == "alb"
    stop = None
    on_pass = None
    if alb:
        if monitor is None:
            raise ValueError("ALB mode requires a progress monitor")
        monitor.start_iteration(epoch)
        stop = monitor.stop_signal(transport.rank)
        rank = transport.rank

        def on_pass() -> None:
            monitor.report_complete(rank)

    block = solve_block(
        shard,
        working,
        state.beta_m,
        penalty,
        state.mu,
        config.nu,
        cursor,
        stop,
        alb=alb,
        on_pass_complete=on_pass,
        coordinate_delay=coordinate_delay,
    )

    xdelta = transport.allreduce_sum(block.local_margin_delta, label="xdelta")
    r_old_local = penalty_value(penalty, state.beta_m)
    r_new_local = penalty_value(penalty, state.beta_m + block.delta_beta)
    quad_pre, r_old, r_new = transport.allreduce_sum(
        [block.quad_form, r_old_local, r_new_local], label="scalars"
    )

    f0 = float(total_loss(config.loss, labels, state.margins) + r_old)

    def finish(alpha: float, f_new: float, delta_zero: bool) -> IterationStats:
        nnz = int(
            transport.allreduce_sum(
                [float(np.count_nonzero(state.beta_m))], label="stats"
            )[0]
        )
        return IterationStats(
            iteration=epoch,
            objective=f_new,
            alpha=alpha,
            mu=state.mu,
            nnz=nnz,
            wall_time=time.perf_counter() - t_start,
            reduce_bytes=transport.bytes_reduced - bytes_before,
            delta_zero=delta_zero,
        )

    if quad_pre == 0.0:
        # Delta is exactly zero on every rank; nothing to merge.
        return finish(1.0, f0, True)

    quad_total = state.mu * quad_pre
    D = directional_D(working, xdelta, r_new - r_old, quad_total, config.gamma)
    if not (D < 0.0):
        raise LineSearchError(
            "directional value is not a descent value",
            diagnostics={"D": D, "quad_form_total": quad_total, "f0": f0},
        )

    def evaluate_batch(alphas: Sequence[float]) -> np.ndarray:
        r_blocks = [
            penalty_value(penalty, state.beta_m + a * block.delta_beta)
            for a in alphas
        ]
        r_tot = transport.allreduce_sum(r_blocks, label="ls")
        return np.asarray(
            [
                total_loss(config.loss, labels, state.margins + a * xdelta) + r_tot[i]
                for i, a in enumerate(alphas)
            ]
        )

    f_at_one = float(total_loss(config.loss, labels, state.margins + xdelta) + r_new)
    alpha, f_new = line_search(f0, evaluate_batch, D, config, f_at_one=f_at_one)

    state.beta_m = state.beta_m + alpha * block.delta_beta
    state.margins = state.margins + alpha * xdelta
    if config.mu_adaptive:
        state.mu = adapt_mu(state.mu, alpha, config.eta1, config.eta2)

    return finish(alpha, f_new, False)


def fit(
    shard: FeatureShard,
    config: SolverConfig,
    transport,
    *,
    monitor=None,
    coordinate_delay: float = 0.0,
) -> tuple[np.ndarray, list[IterationStats]]:
    """Run the solver to convergence; all workers call this collectively.

    Returns the local weight block and the per-iteration history. Convergence:
    a globally zero merged step, or a relative objective change below ``tol``,
    or ``max_outer`` iterations.
    """
    if config.loss.kind in BINARY_LOSSES and not np.all(np.abs(shard.labels) == 1.0):
        raise ValueError(f"{config.loss.kind} loss requires labels in {{-1, +1}}")

    state = ModelState(
        beta_m=np.zeros(shard.num_local_features),
        margins=np.zeros(shard.n),
        mu=config.mu0,
    )
    cursor = BlockCursor()
    if config.mode == "alb" and monitor is None:
        monitor = transport.progress_monitor(config.kappa)

    history: list[IterationStats] = []
    f_prev = total_loss(config.loss, shard.labels, state.margins)
    for it in range(config.max_outer):
        stats = outer_step(
            state,
            shard,
            config,
            transport,
            cursor,
            epoch=it,
            monitor=monitor,
            coordinate_delay=coordinate_delay,
        )
        history.append(stats)
        if stats.delta_zero:
            break
        if abs(f_prev - stats.objective) <= config.tol * (1.0 + abs(stats.objective)):
            break
        f_prev = stats.objective
    return state.beta_m, history


def gather_dense_weights(
    shard: FeatureShard, beta_m: np.ndarray, transport
) -> np.ndarray:
    """Assemble the full weight vector from the distributed blocks."""
    dense = np.zeros(shard.num_features_global)
    dense[shard.feature_ids] = beta_m
    return transport.allreduce_sum(dense, label="gather")


HISTORY_FIELDS = ("iteration", "seconds", "objective", "alpha", "mu", "nnz", "reduce_bytes")


def write_history_csv(history: list[IterationStats], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_FIELDS)
        for s in history:
            writer.writerow(
                [
                    s.iteration,
                    repr(s.wall_time),
                    repr(s.objective),
                    repr(s.alpha),
                    repr(s.mu),
                    s.nnz,
                    s.reduce_bytes,
                ]
            )
