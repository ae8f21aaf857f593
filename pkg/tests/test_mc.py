import numpy as np
import pytest

from panelcause.estimators import matrix_complete, mc_cv_lambda, svt
from panelcause.estimators.mc import default_lambda_grid
from panelcause.panel import PanelMatrix
from panelcause.util import child_rng


def control_panel(values, observed=None):
    values = np.asarray(values, dtype=float)
    n, t = values.shape
    observed = np.ones((n, t), bool) if observed is None else np.asarray(observed, bool)
    return PanelMatrix(values, observed, np.zeros(n, bool), np.full(n, -1),
                       [f"u{i}" for i in range(n)], np.arange(2000, 2000 + t))


class TestSvt:
    def test_diagonal_soft_threshold(self):
        L, s = svt(np.diag([3.0, 1.0]), 1.0)
        assert np.allclose(sorted(s, reverse=True), [2.0, 0.0])
        assert np.allclose(np.linalg.svd(L, compute_uv=False), [2.0, 0.0], atol=1e-12)

    def test_zero_threshold_is_identity(self):
        rng = child_rng(60)
        m = rng.normal(size=(6, 4))
        L, _ = svt(m, 0.0)
        assert np.allclose(L, m, atol=1e-12)


class TestMatrixComplete:
    def test_fully_observed_zero_penalty_identity(self):
        rng = child_rng(61)
        m = rng.normal(size=(8, 5))
        fit = matrix_complete(control_panel(m), lam=0.0)
        assert np.allclose(fit.L_hat, m, atol=1e-10)
        assert fit.converged

    def test_objective_trace_monotone(self):
        rng = child_rng(62)
        for k in range(20):
            n, t = int(rng.integers(8, 30)), int(rng.integers(4, 12))
            vals = rng.normal(size=(n, t))
            observed = rng.random((n, t)) < 0.8
            observed[:, 0] = True
            observed[0, :] = True
            lam = float(rng.uniform(1e-5, 1e-2))
            fe = "two_way" if k % 2 else "none"
            fit = matrix_complete(control_panel(vals, observed), lam, fe=fe)
            diffs = np.diff(fit.objective_trace)
            assert np.all(diffs <= 1e-10 * max(1.0, fit.objective_trace[0]))

    def test_rank_one_recovery(self):
        rng = child_rng(63)
        u, v = rng.normal(size=20), rng.normal(size=10)
        y = np.outer(u, v)
        masked = rng.random(y.shape) < 0.15
        panel = control_panel(y, ~masked)
        sigma = np.linalg.svd(np.where(~masked, y - y[~masked].mean(), 0),
                              compute_uv=False)[0]
        lam = 2 * 1e-4 * sigma / (~masked).sum()
        fit = matrix_complete(panel, lam, tol=1e-10, max_iter=20_000)
        rel = np.sqrt(np.mean((fit.L_hat[masked] - y[masked]) ** 2) /
                      np.mean(y[masked] ** 2))
        assert rel < 1e-3

    def test_treated_block_is_missing_set(self):
        rng = child_rng(64)
        vals = rng.normal(size=(6, 4))
        treated = np.array([True, False, False, False, False, False])
        panel = PanelMatrix(vals, np.ones((6, 4), bool), treated,
                            np.where(treated, 2, -1), list("abcdef"), np.arange(4))
        fit = matrix_complete(panel, lam=1e-3)
        kept = ~panel.treatment_mask()
        # kept cells enter the objective; the treated block is imputed freely
        assert fit.objective_trace[-1] <= fit.objective_trace[0]
        assert np.all(np.isfinite(fit.L_hat))
        assert kept.sum() == 22

    def test_all_missing_row_rejected(self):
        vals = np.zeros((3, 3))
        observed = np.ones((3, 3), bool)
        observed[1, :] = False
        with pytest.raises(ValueError, match="no kept cells"):
            matrix_complete(control_panel(vals, observed), lam=0.1)

    def test_fixed_point_property(self):
        rng = child_rng(65)
        vals = rng.normal(size=(15, 8))
        observed = rng.random((15, 8)) < 0.75
        observed[:, 0] = True
        panel = control_panel(vals, observed)
        fit = matrix_complete(panel, lam=1e-3, tol=1e-9, max_iter=5000)
        assert fit.converged
        # one more pass changes the completion by less than tol
        again = matrix_complete(panel, lam=1e-3, tol=0.0, max_iter=fit.iterations + 1)
        delta = np.linalg.norm(again.L_hat - fit.L_hat) / np.linalg.norm(fit.L_hat)
        assert delta < 1e-8

    def test_two_way_fe_tracks_period_shocks(self):
        # a missing treated block under strong year shocks: plain centering
        # attenuates the imputed shocks, the two-way variant does not
        rng = child_rng(66)
        n, t, start = 60, 10, 5
        shocks = rng.normal(0, 0.5, t)
        vals = rng.normal(size=(n, 1)) + shocks[None, :] + rng.normal(0, 0.05, (n, t))
        treated = np.zeros(n, bool)
        treated[:10] = True
        panel = PanelMatrix(vals, np.ones((n, t), bool), treated,
                            np.where(treated, start, -1),
                            [f"u{i}" for i in range(n)], np.arange(t))
        truth = vals[:10, start:]
        err = {}
        for fe in ("none", "two_way"):
            lam = default_lambda_grid(panel, fe=fe)[1]
            fit = matrix_complete(panel, lam, fe=fe, max_iter=2000)
            err[fe] = float(np.sqrt(np.mean((fit.L_hat[:10, start:] - truth) ** 2)))
        assert err["two_way"] < err["none"]
        assert err["two_way"] < 0.1

    def test_unit_permutation_invariance(self):
        rng = child_rng(67)
        vals = rng.normal(size=(12, 6))
        treated = np.zeros(12, bool)
        treated[[2, 7]] = True
        panel = PanelMatrix(vals, np.ones((12, 6), bool), treated,
                            np.where(treated, 3, -1),
                            [f"u{i}" for i in range(12)], np.arange(6))
        fit = matrix_complete(panel, lam=1e-3)
        perm = rng.permutation(12)
        fit_p = matrix_complete(panel.subset_units(perm), lam=1e-3)
        assert np.allclose(fit_p.L_hat, fit.L_hat[perm], atol=1e-8)


class TestMcCv:
    def test_exact_low_rank_prefers_small_end(self):
        rng = child_rng(68)
        y = np.outer(rng.normal(size=30), rng.normal(size=8)) \
            + np.outer(rng.normal(size=30), rng.normal(size=8))
        panel = control_panel(y)
        grid = default_lambda_grid(panel, n=4)
        lam, scores = mc_cv_lambda(panel, grid, holdout_fraction=0.1, reps=2,
                                   seed=1, max_iter=4000, return_scores=True)
        assert lam in grid[:2]
        best_rmse = min(s for _, s in scores)
        assert best_rmse < 0.1 * np.std(y)

    def test_white_noise_prefers_large_end(self):
        rng = child_rng(69)
        y = rng.normal(size=(40, 10))
        panel = control_panel(y)
        # grid reaching the full-shrinkage penalty
        kept = panel.observed
        sigma = np.linalg.svd(y - y.mean(), compute_uv=False)[0]
        lam_max = 2.0 * sigma / kept.sum()
        grid = [lam_max * f for f in (1e-3, 1e-2, 0.1, 1.0)]
        lam = mc_cv_lambda(panel, grid, holdout_fraction=0.1, reps=2, seed=2)
        assert lam == grid[-1]

    def test_single_element_grid(self):
        rng = child_rng(70)
        panel = control_panel(rng.normal(size=(10, 5)))
        assert mc_cv_lambda(panel, [0.123], reps=1, seed=0) == 0.123

    def test_empty_holdout_rejected(self):
        vals = np.zeros((4, 3))
        panel = PanelMatrix(vals, np.ones((4, 3), bool), np.ones(4, bool),
                            np.full(4, 1), list("abcd"), np.arange(3))
        with pytest.raises(ValueError):
            mc_cv_lambda(panel, [0.1], reps=1)
