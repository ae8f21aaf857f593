import csv

import numpy as np
import pytest

from panelcause.bootstrap import SplitEnsemble, ate_timepath, bootstrap_ate
from panelcause.estimators import estimate_effects
from panelcause.panel import PanelMatrix
from panelcause.util import child_rng, write_csv


def make_panel(values, treated, start):
    values = np.asarray(values, dtype=float)
    n, t = values.shape
    treated = np.asarray(treated, dtype=bool)
    return PanelMatrix(values, np.ones((n, t), bool), treated,
                       np.where(treated, start, -1),
                       [f"u{i}" for i in range(n)], np.arange(2010, 2010 + t))


def additive_panel(effect=0.4, n=24, t=6, start=3, n_treated=6, noise=0.0, seed=100):
    rng = child_rng(seed)
    vals = rng.normal(size=(n, 1)) + rng.normal(size=(1, t)) \
        + rng.normal(0, noise, (n, t)) if noise else \
        rng.normal(size=(n, 1)) + rng.normal(size=(1, t))
    treated = np.zeros(n, bool)
    treated[:n_treated] = True
    vals = np.asarray(vals, dtype=float)
    vals[:n_treated, start:] += effect
    return make_panel(vals, treated, start)


class TestEnsemble:
    def test_shape_validation(self):
        with pytest.raises(ValueError):
            SplitEnsemble(np.zeros((3, 4)))

    def test_from_splits(self):
        e = SplitEnsemble.from_splits([np.zeros((3, 4)), np.ones((3, 4))])
        assert e.n_splits == 2
        assert np.allclose(e.mean(), 0.5)

    def test_non_finite_rejected(self):
        bad = np.zeros((2, 2, 1))
        bad[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            SplitEnsemble(bad)


class TestBootstrap:
    def test_degenerate_bootstrap_zero_width(self):
        # one split, no noise, constant injected effect: every draw equals it
        panel = additive_panel(effect=0.4)
        ens = SplitEnsemble(panel.values[:, :, None])
        summ = bootstrap_ate(ens, panel, "dd", reps=25, seed=3)
        assert np.allclose(summ.draws, 0.4, atol=1e-9)
        assert np.allclose(summ.hi95 - summ.lo95, 0.0, atol=1e-9)

    def test_diagnostic_mode_matches_direct_run(self):
        panel = additive_panel(effect=0.3, noise=0.2, seed=101)
        ens = SplitEnsemble(panel.values[:, :, None])
        summ = bootstrap_ate(ens, panel, "dd", reps=3, seed=4, resample=False)
        direct = estimate_effects(panel, "dd")
        assert np.allclose(summ.draws, direct.per_year_ate[None, :], atol=1e-12)

    def test_determinism_and_thread_invariance(self):
        panel = additive_panel(effect=0.2, noise=0.3, seed=102)
        splits = [panel.values + child_rng(7, s).normal(0, 0.1, panel.values.shape)
                  for s in range(3)]
        ens = SplitEnsemble.from_splits(splits)
        a = bootstrap_ate(ens, panel, "dd", reps=12, seed=5, threads=1)
        b = bootstrap_ate(ens, panel, "dd", reps=12, seed=5, threads=4)
        assert np.array_equal(a.draws, b.draws)
        assert np.array_equal(a.lo95, b.lo95)

    def test_ci_endpoints_are_order_statistics(self, tmp_path):
        panel = additive_panel(effect=0.2, noise=0.3, seed=103)
        ens = SplitEnsemble.from_splits(
            [panel.values + child_rng(8, s).normal(0, 0.1, panel.values.shape)
             for s in range(2)])
        summ = bootstrap_ate(ens, panel, "dd", reps=40, seed=6)
        path = tmp_path / "draws.csv"
        write_csv(path, ["rep", "year", "ate"],
                  [(r, int(y), summ.draws[r, k]) for r in range(summ.reps)
                   for k, y in enumerate(summ.years)])
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        for k, year in enumerate(summ.years):
            draws = np.array([float(r["ate"]) for r in rows
                              if int(r["year"]) == year])
            assert summ.lo95[k] in draws
            assert summ.hi95[k] in draws
            assert np.percentile(draws, 2.5, method="lower") == summ.lo95[k]
            assert np.percentile(draws, 97.5, method="higher") == summ.hi95[k]
            assert summ.lo95[k] <= summ.mean[k] <= summ.hi95[k]

    def test_counts_resampled_to_requested_sizes(self):
        panel = additive_panel(effect=0.5, noise=0.1, seed=104)
        ens = SplitEnsemble(panel.values[:, :, None])
        summ = bootstrap_ate(ens, panel, "dd", reps=5, seed=9,
                             n_control=40, n_treated=12)
        assert summ.draws.shape == (5, 3)

    def test_needs_two_per_group(self):
        panel = additive_panel(n=3, n_treated=1, t=6)
        ens = SplitEnsemble(panel.values[:, :, None])
        with pytest.raises(ValueError):
            bootstrap_ate(ens, panel, "dd", reps=2, seed=0)

    def test_unknown_estimator(self):
        panel = additive_panel()
        ens = SplitEnsemble(panel.values[:, :, None])
        with pytest.raises(ValueError):
            bootstrap_ate(ens, panel, "ols", reps=2, seed=0)

    def test_failed_replicates_are_redrawn(self, monkeypatch):
        import panelcause.bootstrap as bs
        panel = additive_panel(effect=0.4)
        ens = SplitEnsemble(panel.values[:, :, None])
        real = bs.counterfactual_matrix
        calls = {"n": 0}

        def flaky(p, estimator, options=None):
            calls["n"] += 1
            if calls["n"] <= 2:  # first two attempts fail, then recover
                raise RuntimeError("transient")
            return real(p, estimator, options)

        monkeypatch.setattr(bs, "counterfactual_matrix", flaky)
        summ = bootstrap_ate(ens, panel, "dd", reps=3, seed=14)
        assert summ.draws.shape == (3, 3)
        assert calls["n"] == 5  # 2 failures + 3 successes
        assert summ.retries == 2

    def test_retry_cap_aborts(self, monkeypatch):
        import panelcause.bootstrap as bs
        panel = additive_panel(effect=0.4)
        ens = SplitEnsemble(panel.values[:, :, None])
        monkeypatch.setattr(bs, "counterfactual_matrix",
                            lambda *a, **k: (_ for _ in ()).throw(RuntimeError("down")))
        with pytest.raises(RuntimeError, match="failed 10 times"):
            bootstrap_ate(ens, panel, "dd", reps=1, seed=15)


class TestTimepath:
    def test_offsets_three_to_six(self):
        panel = additive_panel(effect=0.3, t=10, start=3, seed=105)
        ens = SplitEnsemble(panel.values[:, :, None])
        summ = bootstrap_ate(ens, panel, "dd", reps=5, seed=10)
        rows = ate_timepath(summ)
        assert [r[0] for r in rows] == [3, 4, 5, 6]

    def test_short_panel_returns_what_exists(self):
        panel = additive_panel(effect=0.3, t=5, start=3, seed=106)
        ens = SplitEnsemble(panel.values[:, :, None])
        summ = bootstrap_ate(ens, panel, "dd", reps=4, seed=11)
        rows = ate_timepath(summ)
        assert [r[0] for r in rows] == [1, 2]

    def test_single_post_year_one_row(self):
        panel = additive_panel(effect=0.3, t=4, start=3, seed=108)
        ens = SplitEnsemble(panel.values[:, :, None])
        summ = bootstrap_ate(ens, panel, "dd", reps=4, seed=13)
        rows = ate_timepath(summ)
        assert len(rows) == 1 and rows[0][0] == 1

    def test_ramping_effect_monotone(self):
        rng = child_rng(107)
        n, t, start = 60, 10, 4
        vals = rng.normal(size=(n, 1)) + rng.normal(size=(1, t)) \
            + rng.normal(0, 0.05, (n, t))
        treated = np.zeros(n, bool)
        treated[:12] = True
        ramp = 0.05 * np.arange(1, t - start + 1)
        vals[:12, start:] += ramp[None, :]
        panel = make_panel(vals, treated, start)
        ens = SplitEnsemble(panel.values[:, :, None])
        summ = bootstrap_ate(ens, panel, "dd", reps=30, seed=12)
        rows = ate_timepath(summ)
        means = [r[1] for r in rows]
        assert all(a < b for a, b in zip(means, means[1:]))
