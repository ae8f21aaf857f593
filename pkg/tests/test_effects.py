import numpy as np
import pytest

from panelcause.estimators import (counterfactual_matrix,
                                   effects_from_counterfactual, estimate_effects)
from panelcause.panel import PanelMatrix
from panelcause.util import child_rng


def make_panel(values, treated, start):
    values = np.asarray(values, dtype=float)
    n, t = values.shape
    treated = np.asarray(treated, dtype=bool)
    return PanelMatrix(values, np.ones((n, t), bool), treated,
                       np.where(treated, start, -1),
                       [f"u{i}" for i in range(n)], np.arange(2011, 2011 + t))


class TestEffects:
    def test_counterfactual_equals_observed(self):
        rng = child_rng(80)
        vals = rng.normal(size=(5, 4))
        panel = make_panel(vals, [True, True, False, False, False], start=2)
        res = effects_from_counterfactual(panel, vals.copy())
        assert np.allclose(res.per_year_ate, 0.0)
        assert res.ate == 0.0

    def test_constant_gap_recovers_magnitude(self):
        rng = child_rng(81)
        vals = rng.normal(size=(6, 5))
        panel = make_panel(vals, [True, True, True, False, False, False], start=3)
        res = effects_from_counterfactual(panel, vals - 0.22)
        assert np.allclose(res.per_year_ate, 0.22)
        assert res.ate == pytest.approx(0.22)

    def test_year_ate_is_mean_over_treated(self):
        vals = np.zeros((3, 3))
        vals[0, 2], vals[1, 2] = 0.1, 0.3
        panel = make_panel(vals, [True, True, False], start=2)
        res = effects_from_counterfactual(panel, np.zeros((3, 3)))
        assert res.per_year_ate[-1] == pytest.approx(0.2)

    def test_missing_counterfactual_cell_rejected(self):
        panel = make_panel(np.zeros((3, 3)), [True, False, False], start=1)
        cf = np.zeros((3, 3))
        cf[0, 2] = np.nan
        with pytest.raises(ValueError, match="missing"):
            effects_from_counterfactual(panel, cf)

    def test_table_schema(self):
        vals = np.arange(12.0).reshape(3, 4)
        panel = make_panel(vals, [True, False, False], start=2)
        res = effects_from_counterfactual(panel, vals - 1.0)
        assert res.table == [("u0", 2013, vals[0, 2], vals[0, 2] - 1.0, 1.0),
                             ("u0", 2014, vals[0, 3], vals[0, 3] - 1.0, 1.0)]

    def test_unobserved_treated_cells_skipped(self):
        vals = np.ones((3, 4))
        panel = make_panel(vals, [True, False, False], start=2)
        panel.observed[0, 3] = False
        cf = np.zeros((3, 4))
        cf[0, 3] = np.nan  # tolerated: the cell is unobserved
        res = effects_from_counterfactual(panel, cf)
        assert np.isnan(res.per_year_ate[-1])
        assert res.per_year_ate[0] == 1.0


class TestDriver:
    def test_estimators_agree_on_additive_panel(self):
        rng = child_rng(82)
        n, t, start = 30, 8, 4
        vals = rng.normal(size=(n, 1)) + np.linspace(0, 1, t)[None, :]
        treated = np.zeros(n, bool)
        treated[:5] = True
        vals[:5, start:] += 0.5
        panel = make_panel(vals, treated, start)
        for est in ("dd", "mc", "scen"):
            res = estimate_effects(panel, est, {"cv_seed": 3})
            assert res.ate == pytest.approx(0.5, abs=1e-2), est

    def test_unknown_estimator(self):
        panel = make_panel(np.zeros((3, 4)), [True, False, False], start=2)
        with pytest.raises(ValueError, match="unknown estimator"):
            counterfactual_matrix(panel, "ols")
