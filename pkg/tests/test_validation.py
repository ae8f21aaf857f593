import numpy as np
import pytest

from panelcause.loss import BerksonMap
from panelcause.panel import PanelMatrix
from panelcause.util import child_rng
from panelcause.validation import (SimScenario, generate_panel, kfold_control_cv,
                                   placebo_last_pretreat, simulate_berkson,
                                   simulate_pretrend)


def make_panel(values, treated, start):
    values = np.asarray(values, dtype=float)
    n, t = values.shape
    treated = np.asarray(treated, dtype=bool)
    return PanelMatrix(values, np.ones((n, t), bool), treated,
                       np.where(treated, start, -1),
                       [f"u{i}" for i in range(n)], np.arange(2006, 2006 + t))


class TestScenario:
    def test_reproducible(self):
        s = SimScenario(n_units=40, n_periods=8, seed=5)
        p1, p2 = generate_panel(s), generate_panel(s)
        assert np.array_equal(p1.values, p2.values)
        assert np.array_equal(p1.treated_unit, p2.treated_unit)

    def test_effect_and_timing(self):
        s = SimScenario(n_units=200, n_periods=8, treat_share=0.25, effect=2.0,
                        noise_sd=1e-9, year_shock_sd=0.0, seed=6)
        p = generate_panel(s)
        assert p.treat_start() == 4
        trt = p.treated_unit
        gap = p.values[trt, 4:].mean(axis=0) - p.values[trt, :4].mean()
        assert np.all(gap > 1.0)  # effect dominates unit-mean variation here

    def test_selection_requires_drifters(self):
        s = SimScenario(n_units=20, n_periods=6, treat_share=0.5, drift_share=0.1,
                        selection_correlated=True, seed=7)
        with pytest.raises(ValueError, match="drifting"):
            generate_panel(s)

    def test_short_panel_rejected(self):
        with pytest.raises(ValueError):
            SimScenario(n_units=10, n_periods=3)


class TestKfold:
    def test_constant_panel_perfect(self):
        vals = np.full((20, 6), 1.7)
        panel = make_panel(vals, [True] * 2 + [False] * 18, start=3)
        for est in ("dd", "mc", "scen"):
            rep = kfold_control_cv(panel, k=5, estimator=est,
                                   options={"lam": 1e-6})
            assert np.all(np.abs(rep.mean_difference) < 1e-6), est
            assert rep.rmse < 1e-6, est

    def test_every_control_held_out_once(self):
        rng = child_rng(90)
        vals = rng.normal(size=(23, 6))
        panel = make_panel(vals, [True] * 3 + [False] * 20, start=3)
        rep = kfold_control_cv(panel, k=4, estimator="dd")
        assert rep.n_cells == 20 * 3  # every control unit, every post year

    def test_mean_difference_small_on_additive_panel(self):
        rng = child_rng(91)
        n, t, start = 120, 10, 5
        vals = rng.normal(size=(n, 1)) + rng.normal(size=(1, t)) \
            + rng.normal(0, 0.4, (n, t))
        panel = make_panel(vals, [True] * 10 + [False] * (n - 10), start=start)
        rep = kfold_control_cv(panel, k=10, estimator="dd")
        assert np.all(np.abs(rep.mean_difference) < 0.15)

    def test_too_few_controls(self):
        panel = make_panel(np.zeros((5, 6)), [True, True, False, False, False], 3)
        with pytest.raises(ValueError):
            kfold_control_cv(panel, k=10, estimator="dd")

    def test_estimator_failure_reports_fold(self):
        rng = child_rng(93)
        panel = make_panel(rng.normal(size=(14, 6)), [True] * 2 + [False] * 12, 3)
        with pytest.raises(RuntimeError, match="fold 0"):
            kfold_control_cv(panel, k=4, estimator="nope")


class TestPlacebo:
    def test_deterministic_parallel_panel_zero_error(self):
        n, t = 16, 8
        vals = np.linspace(-1, 1, n)[:, None] + np.arange(t)[None, :] * 0.3
        panel = make_panel(vals, [True] * 4 + [False] * 12, start=5)
        err = placebo_last_pretreat(panel, "dd", reps=5, seed=1)
        assert abs(err) < 1e-9

    def test_unbiased_on_exchangeable_noise(self):
        # a single panel's placebo error converges to that panel's realized
        # prediction error, so unbiasedness is a statement across panels
        rng = child_rng(92)
        for est in ("dd", "scen"):
            errs = []
            for _ in range(15):
                vals = rng.normal(size=(60, 8))
                panel = make_panel(vals, [True] * 10 + [False] * 50, start=5)
                errs.append(placebo_last_pretreat(panel, est, reps=10, seed=2,
                                                  options={"cv_seed": 1}))
            se = np.std(errs, ddof=1) / np.sqrt(len(errs))
            assert abs(np.mean(errs)) < 3.5 * se + 0.02, est

    def test_needs_enough_pre_periods(self):
        panel = make_panel(np.zeros((6, 4)), [True] + [False] * 5, start=2)
        with pytest.raises(ValueError):
            placebo_last_pretreat(panel, "dd")

    def test_trend_selection_favors_year_weight_regression(self):
        # treated units drift upward: a parallel-trends prediction
        # underpredicts the last pre-treatment year, while the year-weight
        # regression extrapolates part of the trend
        dd_errs, sc_errs = [], []
        for k in range(6):
            scn = SimScenario(n_units=120, n_periods=12, treat_share=0.08,
                              pretrend_rate=0.15, drift_share=0.3,
                              selection_correlated=True, noise_sd=0.2, seed=1)
            p = generate_panel(scn, rng=child_rng(1, 100 + k))
            dd_errs.append(placebo_last_pretreat(p, "dd", reps=15, seed=k))
            sc_errs.append(placebo_last_pretreat(p, "scen", reps=15, seed=k,
                                                 options={"lam": 1e-3}))
        assert np.mean(dd_errs) < 0
        assert abs(np.mean(sc_errs)) < abs(np.mean(dd_errs))


class TestSimulations:
    def test_pretrend_requires_selection(self):
        s = SimScenario(n_units=30, n_periods=8, selection_correlated=False)
        with pytest.raises(ValueError):
            simulate_pretrend(s, reps=2)

    def test_pretrend_rows_and_null_rate(self):
        s = SimScenario(n_units=60, n_periods=8, treat_share=0.1, drift_share=0.3,
                        pretrend_rate=0.0, selection_correlated=True,
                        noise_sd=0.3, seed=8)
        rows = simulate_pretrend(s, reps=30, rates=[0.0], periods=[8])
        assert {r["estimator"] for r in rows} == {"dd", "mc"}
        for r in rows:
            assert abs(r["bias"]) < 3.5 * r["mc_se"] + 1e-9

    def test_berkson_requires_map(self):
        s = SimScenario(n_units=30, n_periods=8)
        with pytest.raises(ValueError):
            simulate_berkson(s, reps=2)

    def test_berkson_identity_map_recovers_effect(self):
        s = SimScenario(n_units=60, n_periods=8, treat_share=0.15, effect=1.0,
                        noise_sd=0.3, berkson=BerksonMap(0.0, 1.0), seed=9)
        rows = simulate_berkson(s, reps=30)
        for r in rows:
            assert abs(r["mean_estimate"] - 1.0) < 4 * r["mc_se"] + 0.02

    def test_berkson_alpha_invariance(self):
        base = dict(n_units=50, n_periods=8, treat_share=0.15, effect=1.0,
                    noise_sd=0.3, seed=10)
        r0 = simulate_berkson(SimScenario(berkson=BerksonMap(0.0, 0.7), **base),
                              reps=10)
        r9 = simulate_berkson(SimScenario(berkson=BerksonMap(9.0, 0.7), **base),
                              reps=10)
        for a, b in zip(r0, r9):
            assert a["mean_estimate"] == pytest.approx(b["mean_estimate"], abs=1e-8)

    def test_threads_do_not_change_results(self):
        s = SimScenario(n_units=40, n_periods=8, treat_share=0.15, effect=1.0,
                        noise_sd=0.3, berkson=BerksonMap(0.0, 0.6), seed=11)
        r1 = simulate_berkson(s, reps=8, threads=1)
        r2 = simulate_berkson(s, reps=8, threads=3)
        assert r1 == r2

    def test_dd_estimate_exactly_linear_in_phi(self):
        # same seeds, two slopes: the DD pipeline scales exactly with phi
        base = dict(n_units=40, n_periods=8, treat_share=0.15, effect=1.0,
                    noise_sd=0.3, seed=12)
        r6 = simulate_berkson(SimScenario(berkson=BerksonMap(0.0, 0.6), **base),
                              reps=10)
        r8 = simulate_berkson(SimScenario(berkson=BerksonMap(0.0, 0.8), **base),
                              reps=10)
        dd6 = next(r for r in r6 if r["estimator"] == "dd")["mean_estimate"]
        dd8 = next(r for r in r8 if r["estimator"] == "dd")["mean_estimate"]
        assert dd6 / 0.6 == pytest.approx(dd8 / 0.8, abs=1e-10)
