"""Difference-in-differences: the two-unit group-means form, the two-way
fixed-effects regression, a placebo pre-trend test, and FE-based imputation
of untreated outcomes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..panel import PanelMatrix


@dataclass
class DDResult:
    beta: float
    se: float
    p_value: float
    n_obs: int

    @property
    def reject_95(self) -> bool:
        return bool(self.p_value < 0.05)

    @property
    def reject_90(self) -> bool:
        return bool(self.p_value < 0.10)


def dd_two_unit(t0: float, t1: float, c0: float, c1: float) -> float:
    """(T1 - T0) - (C1 - C0) on group-period means."""
    return (t1 - t0) - (c1 - c0)


def _demean_cells(x, ui, ti, n_units, n_periods, balanced, tol=1e-13, max_iter=2000):
    """Residualize flat cell values against unit and period means.

    Balanced panels use the closed-form double demeaning; unbalanced ones
    alternate group demeaning until the means vanish. Both are linear maps of
    the input, so the FE absorption commutes with affine outcome rescaling.
    """
    x = x.astype(float).copy()
    if balanced:
        grand = x.mean()
        unit_mean = np.bincount(ui, weights=x, minlength=n_units) / n_periods
        time_mean = np.bincount(ti, weights=x, minlength=n_periods) / n_units
        return x - unit_mean[ui] - time_mean[ti] + grand
    unit_n = np.bincount(ui, minlength=n_units).astype(float)
    time_n = np.bincount(ti, minlength=n_periods).astype(float)
    scale = max(np.max(np.abs(x)), 1.0)
    for _ in range(max_iter):
        um = np.bincount(ui, weights=x, minlength=n_units) / np.maximum(unit_n, 1)
        x -= um[ui]
        tm = np.bincount(ti, weights=x, minlength=n_periods) / np.maximum(time_n, 1)
        x -= tm[ti]
        if max(np.max(np.abs(um)), np.max(np.abs(tm))) < tol * scale:
            break
    return x


def dd_twfe(panel: PanelMatrix) -> DDResult:
    """Two-way fixed-effects regression of outcomes on the treatment indicator.

    The indicator is 1 for treated units at and after adoption. Unit and
    period means are absorbed; the conventional homoskedastic standard error
    uses residual degrees of freedom n - (#units + #periods).
    """
    if panel.n_units < 2 or panel.n_periods < 2:
        raise ValueError("need at least 2 units and 2 periods")
    if not np.any(panel.treated_unit):
        raise ValueError("panel has no treated units")
    if not np.any(~panel.treated_unit):
        raise ValueError("panel has no control units")
    panel.treat_start()  # rejects staggered adoption
    tau_full = panel.treatment_mask()
    ui, ti = np.nonzero(panel.observed)
    y = panel.values[ui, ti]
    tau = tau_full[ui, ti].astype(float)
    n_obs = y.size
    n_u = len(np.unique(ui))
    n_t = len(np.unique(ti))
    balanced = n_obs == panel.n_units * panel.n_periods
    y_dm = _demean_cells(y, ui, ti, panel.n_units, panel.n_periods, balanced)
    tau_dm = _demean_cells(tau, ui, ti, panel.n_units, panel.n_periods, balanced)
    denom = float(tau_dm @ tau_dm)
    if denom <= 1e-12 * n_obs:
        raise ValueError("collinear design: treatment indicator is absorbed by fixed effects")
    beta = float(y_dm @ tau_dm) / denom
    resid = y_dm - beta * tau_dm
    df = n_obs - (n_u + n_t)
    if df > 0:
        sigma2 = float(resid @ resid) / df
        se = float(np.sqrt(sigma2 / denom))
        if se > 0:
            p = float(2.0 * stats.t.sf(abs(beta / se), df))
        else:
            # exact fit: the coefficient is either exactly zero or exact
            scale = max(1.0, float(np.max(np.abs(y))))
            p = 1.0 if abs(beta) < 1e-10 * scale else 0.0
    else:
        # saturated designs leave no residual degrees of freedom
        se = float("nan")
        p = float("nan")
    return DDResult(beta=beta, se=se, p_value=p, n_obs=int(n_obs))


def pretrend_test(panel: PanelMatrix, placebo_period: int) -> DDResult:
    """Relabel treated units as treated from a pre-treatment period and rerun
    the FE regression on pre-treatment data only.

    A significant coefficient rejects parallel pre-trends (reject_95 /
    reject_90 flags on the result).
    """
    start = panel.treat_start()
    if not (0 < placebo_period < start):
        raise ValueError("placebo period must lie strictly inside the pre-treatment window")
    if start < 2:
        raise ValueError("fewer than 2 pre-treatment periods")
    first = np.where(panel.treated_unit, placebo_period, -1)
    pre = PanelMatrix(
        values=panel.values[:, :start].copy(),
        observed=panel.observed[:, :start].copy(),
        treated_unit=panel.treated_unit.copy(),
        first_treat_period=first,
        unit_ids=list(panel.unit_ids),
        period_labels=panel.period_labels[:start].copy(),
    )
    return dd_twfe(pre)


def dd_impute_counterfactual(panel: PanelMatrix, tol=1e-12, max_iter=5000) -> np.ndarray:
    """Untreated-outcome prediction from an additive unit + period model.

    Fits y ~ u_i + v_t by alternating means on the observed untreated cells
    and predicts every cell as u_i + v_t; treated post-adoption cells read as
    counterfactuals. The prediction is invariant to the (u, v) gauge.
    """
    fit_mask = panel.observed & ~panel.treatment_mask()
    if np.any(fit_mask.sum(axis=1) == 0):
        raise ValueError("a unit has no observed untreated cells to fit on")
    if np.any(fit_mask.sum(axis=0) == 0):
        raise ValueError("a period has no observed untreated cells to fit on")
    ui, ti = np.nonzero(fit_mask)
    y = panel.values[ui, ti]
    n, t = panel.n_units, panel.n_periods
    unit_n = np.bincount(ui, minlength=n).astype(float)
    time_n = np.bincount(ti, minlength=t).astype(float)
    u = np.zeros(n)
    v = np.zeros(t)
    scale = max(np.max(np.abs(y)), 1.0)
    for _ in range(max_iter):
        u_new = np.bincount(ui, weights=y - v[ti], minlength=n) / unit_n
        v_new = np.bincount(ti, weights=y - u_new[ui], minlength=t) / time_n
        delta = max(np.max(np.abs(u_new - u)), np.max(np.abs(v_new - v)))
        u, v = u_new, v_new
        if delta < tol * scale:
            break
    return u[:, None] + v[None, :]
