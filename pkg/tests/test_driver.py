import csv

import numpy as np
import pytest

from blockglm import (
    LOGISTIC,
    SQUARED,
    LossFunction,
    ModelState,
    SolverConfig,
    WorkingSet,
    adapt_mu,
    directional_D,
    fit,
    line_search,
    outer_step,
    write_history_csv,
)
from blockglm.errors import LineSearchError
from blockglm.runtime import make_inprocess_world
from blockglm.shards import BlockCursor

from conftest import (
    assert_monotone_descent,
    fit_spmd,
    initial_objective,
    make_problem,
    shards_from_dense,
)


class TestDirectionalD:
    def test_arithmetic_example(self):
        ws = WorkingSet(g=np.array([-2.0]), w=np.array([1.0]))
        out = directional_D(ws, np.array([1.0]), 0.5, 2.0, 0.25)
        assert out == pytest.approx(-1.0, abs=1e-15)

    def test_gamma_zero_drops_quadratic(self):
        ws = WorkingSet(g=np.array([1.0, -1.0]), w=np.ones(2))
        out = directional_D(ws, np.array([0.5, 0.25]), -0.1, 1e9, 0.0)
        assert out == pytest.approx(0.5 - 0.25 - 0.1, abs=1e-12)


class TestAdaptMu:
    def test_shortened_step_inflates(self):
        assert adapt_mu(1.0, 0.5, 2.0, 2.0) == 2.0
        assert adapt_mu(3.0, 0.999, 4.0, 2.0) == 12.0

    def test_full_step_relaxes(self):
        assert adapt_mu(4.0, 1.0, 2.0, 2.0) == 2.0

    def test_full_step_floors_at_one(self):
        assert adapt_mu(1.5, 1.0, 2.0, 2.0) == 1.0
        assert adapt_mu(1.0, 1.0, 2.0, 2.0) == 1.0


class TestLineSearch:
    def test_full_step_accepted_without_extra_evals(self):
        calls = []

        def batch(alphas):
            calls.append(list(alphas))
            return np.array([0.0 for _ in alphas])

        alpha, f = line_search(1.0, batch, -1.0, SolverConfig(loss=SQUARED))
        assert alpha == 1.0 and f == 0.0
        assert calls == [[1.0]]

    def test_quadratic_picks_grid_argmin(self):
        config = SolverConfig(loss=SQUARED)

        def batch(alphas):
            return np.array([(2.0 * a - 1.0) ** 2 for a in alphas])

        f0 = 1.0
        alpha, f = line_search(f0, batch, -4.0, config)
        grid = np.geomspace(config.delta, 1.0, config.alpha_grid_size + 1)[1:]
        expected = grid[np.argmin((2.0 * grid - 1.0) ** 2)]
        assert alpha == pytest.approx(expected, rel=1e-15)
        assert f == pytest.approx((2.0 * alpha - 1.0) ** 2, rel=1e-12)
        assert f <= f0 + alpha * config.sigma * -4.0

    def test_backtracks_below_grid_argmin(self):
        # steep increase except very near zero: accepted alpha must come from
        # backtracking the grid argmin, not the argmin itself.
        config = SolverConfig(loss=SQUARED)
        f0 = 1.0
        D = -1.0

        def batch(alphas):
            return np.array(
                [f0 + 50.0 * a * (a - 0.002) for a in alphas]
            )

        alpha, f = line_search(f0, batch, D, config)
        assert 0.0 < alpha < 0.01
        assert f <= f0 + alpha * config.sigma * D

    def test_reuses_precomputed_full_step_value(self):
        def batch(alphas):  # pragma: no cover - must not run
            raise AssertionError("batch evaluator should not be called")

        alpha, f = line_search(1.0, batch, -1.0, SolverConfig(loss=SQUARED), f_at_one=0.5)
        assert (alpha, f) == (1.0, 0.5)

    def test_failure_raises_with_diagnostics(self):
        def batch(alphas):
            return np.array([2.0 for _ in alphas])

        with pytest.raises(LineSearchError) as ei:
            line_search(1.0, batch, -1.0, SolverConfig(loss=SQUARED, max_backtracks=5))
        assert ei.value.diagnostics["f0"] == 1.0
        assert ei.value.diagnostics["max_backtracks"] == 5


IDENTITY_X = np.eye(3)
IDENTITY_Y = np.array([3.0, 0.5, -2.0])
IDENTITY_BETA = np.array([2.0, 0.0, -1.0])
IDENTITY_OBJ = 4.125


def identity_config(**kw):
    base = dict(loss=SQUARED, lambda1=1.0, nu=1e-10, tol=1e-12)
    base.update(kw)
    return SolverConfig(**base)


class TestFitIdentityLasso:
    @pytest.mark.parametrize("M", [1, 2, 3])
    def test_soft_threshold_solution(self, M):
        beta, histories, _ = fit_spmd(IDENTITY_X, IDENTITY_Y, identity_config(), M)
        np.testing.assert_allclose(beta, IDENTITY_BETA, atol=1e-8)
        for h in histories:
            assert h[-1].objective == pytest.approx(IDENTITY_OBJ, rel=1e-10)
            assert all(s.alpha == 1.0 for s in h)

    def test_histories_identical_across_ranks(self):
        _, histories, _ = fit_spmd(IDENTITY_X, IDENTITY_Y, identity_config(), 3)
        ref = [(s.objective, s.alpha, s.mu, s.nnz) for s in histories[0]]
        for h in histories[1:]:
            assert [(s.objective, s.alpha, s.mu, s.nnz) for s in h] == ref

    def test_max_outer_zero_returns_zero_model(self):
        beta, histories, _ = fit_spmd(
            IDENTITY_X, IDENTITY_Y, identity_config(max_outer=0), 2
        )
        assert not beta.any()
        assert all(h == [] for h in histories)

    def test_delta_zero_stop_at_stationary_point(self):
        # lambda1 dominates every gradient entry: first step is exactly zero.
        cfg = identity_config(lambda1=10.0)
        beta, histories, _ = fit_spmd(IDENTITY_X, IDENTITY_Y, cfg, 2)
        assert not beta.any()
        for h in histories:
            assert len(h) == 1 and h[0].delta_zero


class TestOuterStep:
    def test_margins_track_merged_model(self, rng):
        X, y = make_problem(rng, 30, 7, "squared")
        shard = shards_from_dense(X, y, 1)[0]
        transport = make_inprocess_world(1)[0]
        config = SolverConfig(loss=SQUARED, lambda1=0.05, lambda2=0.01)
        state = ModelState(np.zeros(7), np.zeros(30), 1.0)
        cursor = BlockCursor()
        for it in range(3):
            outer_step(state, shard, config, transport, cursor, epoch=it)
        np.testing.assert_allclose(state.margins, X @ state.beta_m, atol=1e-10)

    def test_single_reduce_of_length_n_per_iteration(self, rng):
        X, y = make_problem(rng, 25, 6, "logistic")
        _, _, transports = fit_spmd(X, y, SolverConfig(loss=LOGISTIC, lambda1=0.02), 2)
        t = transports[0]
        iters = sum(1 for r in t.reduce_log if r.label == "xdelta")
        n_sized = [r for r in t.reduce_log if r.length == 25 and r.label != "gather"]
        assert len(n_sized) == iters
        assert all(r.label == "xdelta" for r in n_sized)

    def test_mu_stays_at_least_one(self, rng):
        X, y = make_problem(rng, 40, 12, "logistic")
        _, histories, _ = fit_spmd(X, y, SolverConfig(loss=LOGISTIC, lambda1=0.01), 4)
        assert all(s.mu >= 1.0 for h in histories for s in h)

    def test_mu_frozen_when_adaptation_disabled(self, rng):
        X, y = make_problem(rng, 40, 12, "logistic")
        cfg = SolverConfig(loss=LOGISTIC, lambda1=0.01, mu_adaptive=False)
        _, histories, _ = fit_spmd(X, y, cfg, 4)
        assert all(s.mu == 1.0 for h in histories for s in h)


class TestConvergenceProperties:
    @pytest.mark.parametrize("loss_kind", ["squared", "logistic", "probit"])
    def test_monotone_descent_and_tol_stop(self, rng, loss_kind):
        X, y = make_problem(rng, 50, 10, loss_kind)
        cfg = SolverConfig(loss=_loss(loss_kind), lambda1=0.05, lambda2=0.02, tol=1e-9)
        _, histories, _ = fit_spmd(X, y, cfg, 2)
        h = histories[0]
        assert_monotone_descent(h, initial_objective(cfg, y))
        if not h[-1].delta_zero and len(h) < cfg.max_outer:
            gap = abs(h[-2].objective - h[-1].objective)
            assert gap <= cfg.tol * (1.0 + abs(h[-1].objective))

    def test_partition_count_invariance(self, rng):
        X, y = make_problem(rng, 60, 15, "logistic")
        cfg = SolverConfig(
            loss=LOGISTIC, lambda1=0.03, lambda2=0.1, tol=1e-12, max_outer=300
        )
        beta1, h1, _ = fit_spmd(X, y, cfg, 1)
        for M in (2, 4):
            betaM, hM, _ = fit_spmd(X, y, cfg, M)
            f1, fM = h1[0][-1].objective, hM[0][-1].objective
            assert abs(f1 - fM) <= 1e-6 * (1.0 + abs(f1))
            assert np.max(np.abs(beta1 - betaM)) <= 1e-4

    def test_binary_loss_rejects_real_labels(self):
        X = np.eye(2)
        y = np.array([0.3, -1.0])
        shard = shards_from_dense(X, y, 1)[0]
        transport = make_inprocess_world(1)[0]
        with pytest.raises(ValueError):
            fit(shard, SolverConfig(loss=LOGISTIC, lambda1=0.1), transport)


def _loss(kind):
    from blockglm import get_loss

    return get_loss(kind)


class TestConfigValidation:
    def test_bad_mode(self):
        with pytest.raises(ValueError):
            SolverConfig(mode="async")

    def test_bad_nu(self):
        with pytest.raises(ValueError):
            SolverConfig(nu=0.0)

    def test_bad_backtrack_factor(self):
        with pytest.raises(ValueError):
            SolverConfig(b=1.0)

    def test_bad_eta(self):
        with pytest.raises(ValueError):
            SolverConfig(eta1=0.5)


def test_write_history_csv_round_trip(tmp_path, rng):
    X, y = make_problem(rng, 20, 5, "squared")
    _, histories, _ = fit_spmd(X, y, SolverConfig(loss=SQUARED, lambda1=0.1), 1)
    path = tmp_path / "history.csv"
    write_history_csv(histories[0], path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(histories[0])
    for row, stats in zip(rows, histories[0]):
        assert float(row["objective"]) == stats.objective
        assert float(row["mu"]) == stats.mu
        assert int(row["nnz"]) == stats.nnz
