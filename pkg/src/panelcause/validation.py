"""Estimator-validation battery: k-fold control cross-validation, placebo
prediction of the last pre-treatment year, and Monte Carlo studies of
pre-trend selection bias and compression-type measurement error."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .estimators import (counterfactual_matrix, dd_twfe,
                         effects_from_counterfactual)
from .loss import BerksonMap
from .panel import PanelMatrix
from .util import child_rng, pmap


@dataclass
class SimScenario:
    """Data-generating process for the validation simulations.

    Outcomes are unit effects + year shocks + noise; a drift_share fraction of
    units additionally trends by pretrend_rate per period. Treatment starts at
    period index n_periods // 2 and adds `effect` to treated cells; with
    selection_correlated the treated are drawn from the drifting units,
    otherwise uniformly. An optional measurement map y' = alpha + phi*y is
    applied last.
    """

    n_units: int = 100
    n_periods: int = 10
    treat_share: float = 0.1
    effect: float = 1.0
    pretrend_rate: float = 0.0
    drift_share: float = 0.3
    selection_correlated: bool = False
    noise_sd: float = 0.3
    year_shock_sd: float = 0.2
    berkson: Optional[BerksonMap] = None
    seed: int = 0

    def __post_init__(self):
        if self.n_periods < 4:
            raise ValueError("need at least 4 periods")
        if not (0.0 < self.treat_share < 1.0):
            raise ValueError("treat_share must lie strictly in (0, 1)")
        if not (0.0 <= self.drift_share <= 1.0):
            raise ValueError("drift_share must lie in [0, 1]")

    @property
    def treat_start(self) -> int:
        return self.n_periods // 2


def generate_panel(scenario: SimScenario, rng=None) -> PanelMatrix:
    s = scenario
    rng = child_rng(s.seed) if rng is None else rng
    n, t = s.n_units, s.n_periods
    unit_fe = rng.normal(0.0, 1.0, n)
    year_fe = rng.normal(0.0, s.year_shock_sd, t)
    noise = rng.normal(0.0, s.noise_sd, (n, t))
    drifting = np.zeros(n, dtype=bool)
    n_drift = int(round(s.drift_share * n))
    if n_drift > 0:
        drifting[rng.choice(n, size=n_drift, replace=False)] = True
    periods = np.arange(t)
    values = unit_fe[:, None] + year_fe[None, :] + noise
    values += np.where(drifting[:, None], s.pretrend_rate * periods[None, :], 0.0)
    n_treat = max(1, int(round(s.treat_share * n)))
    if s.selection_correlated:
        pool = np.flatnonzero(drifting)
        if pool.size < n_treat:
            raise ValueError("not enough drifting units to select treatment from")
    else:
        pool = np.arange(n)
    treated_idx = rng.choice(pool, size=n_treat, replace=False)
    treated = np.zeros(n, dtype=bool)
    treated[treated_idx] = True
    start = s.treat_start
    values[np.ix_(treated_idx, np.arange(start, t))] += s.effect
    if s.berkson is not None:
        values = s.berkson.apply(values)
    return PanelMatrix(
        values=values,
        observed=np.ones((n, t), dtype=bool),
        treated_unit=treated,
        first_treat_period=np.where(treated, start, -1),
        unit_ids=[f"u{i}" for i in range(n)],
        period_labels=2000 + periods,
    )


@dataclass
class ValidationReport:
    estimator: str
    years: np.ndarray            # post-treatment period labels
    mean_difference: np.ndarray  # per-year mean(predicted - observed)
    rmse: float                  # over all held-out cells
    n_cells: int


def kfold_control_cv(panel: PanelMatrix, k: int = 10, estimator: str = "mc",
                     options: dict | None = None) -> ValidationReport:
    """Hold out each control fold's post-treatment values once and impute them
    with the estimator fitted on the remaining controls.

    Folds partition the control units; reported are the per-year mean of
    (predicted - observed) over all held-out cells and the overall RMSE.
    """
    start = panel.treat_start()
    ctrl = np.flatnonzero(~panel.treated_unit)
    if ctrl.size < k or k < 2:
        raise ValueError("need at least k control units")
    sub = panel.subset_units(ctrl)
    n = sub.n_units
    post = np.arange(start, sub.n_periods)
    fold_of = np.arange(n) % k
    pred = np.full((n, sub.n_periods), np.nan)
    for f in range(k):
        held = np.flatnonzero(fold_of == f)
        pseudo = PanelMatrix(
            values=sub.values.copy(),
            observed=sub.observed.copy(),
            treated_unit=np.isin(np.arange(n), held),
            first_treat_period=np.where(np.isin(np.arange(n), held), start, -1),
            unit_ids=list(sub.unit_ids),
            period_labels=sub.period_labels.copy(),
        )
        try:
            cf = counterfactual_matrix(pseudo, estimator, options)
        except Exception as exc:
            raise RuntimeError(f"estimator '{estimator}' failed on fold {f}: {exc}") from exc
        pred[np.ix_(held, post)] = cf[np.ix_(held, post)]
    mask = sub.observed[:, post]
    diff = np.where(mask, pred[:, post] - sub.values[:, post], np.nan)
    mean_diff = np.array([np.nanmean(diff[:, j]) if np.any(mask[:, j]) else np.nan
                          for j in range(post.size)])
    rmse = float(np.sqrt(np.nanmean(diff ** 2)))
    return ValidationReport(estimator=estimator, years=sub.period_labels[post].copy(),
                            mean_difference=mean_diff, rmse=rmse,
                            n_cells=int(mask.sum()))


def placebo_last_pretreat(panel: PanelMatrix, estimator: str, reps: int = 100,
                          seed: int = 0, options: dict | None = None,
                          threads: int = 1) -> float:
    """Mean error when predicting treated units' last pre-treatment values.

    Each run resamples control and treated units with replacement, truncates
    the panel to the pre-treatment window, hides the treated units' final
    pre-treatment values, predicts them, and records mean(predicted -
    observed); the average over runs is returned.
    """
    start = panel.treat_start()
    if start < 3:
        raise ValueError("need at least 2 pre-treatment periods before the placebo year")
    ctrl = np.flatnonzero(~panel.treated_unit)
    trt = np.flatnonzero(panel.treated_unit)
    placebo = start - 1

    def one_run(rep):
        rng = child_rng(seed, rep)
        c = rng.choice(ctrl, size=ctrl.size, replace=True)
        t = rng.choice(trt, size=trt.size, replace=True)
        idx = np.concatenate([c, t])
        treated = np.concatenate([np.zeros(c.size, bool), np.ones(t.size, bool)])
        truncated = PanelMatrix(
            values=panel.values[idx][:, :start].copy(),
            observed=panel.observed[idx][:, :start].copy(),
            treated_unit=treated,
            first_treat_period=np.where(treated, placebo, -1),
            unit_ids=[f"r{j}" for j in range(idx.size)],
            period_labels=panel.period_labels[:start].copy(),
        )
        truth = truncated.values[treated, placebo].copy()
        hide = truncated.observed[treated, placebo].copy()
        cf = counterfactual_matrix(truncated, estimator, options)
        err = cf[treated, placebo][hide] - truth[hide]
        return float(np.mean(err))

    errors = pmap(one_run, range(reps), threads)
    return float(np.mean(errors))


def _dd_estimate(panel: PanelMatrix) -> float:
    return dd_twfe(panel).beta


def _mc_estimate(panel: PanelMatrix, mc_options: dict) -> float:
    cf = counterfactual_matrix(panel, "mc", mc_options)
    res = effects_from_counterfactual(panel, cf, "mc")
    return float(np.nanmean(res.per_year_ate))


def simulate_pretrend(scenario: SimScenario, reps: int, rates=None,
                      periods=None, threads: int = 1,
                      mc_options: dict | None = None) -> list:
    """Bias of DD and MC when trend-selected units are preferentially treated.

    For each (n_periods, rate) grid point, panels are generated with
    selection_correlated treatment, both estimators are run, and the mean
    estimation error against the injected effect is reported with its Monte
    Carlo standard error. Rows: dicts with t_periods, rate, estimator, bias,
    mc_se.
    """
    if not scenario.selection_correlated:
        raise ValueError("pretrend study needs selection_correlated scenarios")
    if scenario.berkson is not None:
        raise ValueError("pretrend study runs without a measurement map")
    rates = [scenario.pretrend_rate] if rates is None else list(rates)
    periods = [scenario.n_periods] if periods is None else list(periods)
    mc_opts = {"cv_reps": 1, "max_iter": 600, "grid_n": 3, "grid_lo": 1e-2}
    mc_opts.update(mc_options or {})
    rows = []
    for t in periods:
        for ri, rate in enumerate(rates):
            def one_rep(rep, t=t, rate=rate, ri=ri):
                rng = child_rng(scenario.seed, t, ri, rep)
                s = SimScenario(
                    n_units=scenario.n_units, n_periods=t,
                    treat_share=scenario.treat_share, effect=scenario.effect,
                    pretrend_rate=rate, drift_share=scenario.drift_share,
                    selection_correlated=True, noise_sd=scenario.noise_sd,
                    year_shock_sd=scenario.year_shock_sd, seed=scenario.seed)
                pnl = generate_panel(s, rng=rng)
                return _dd_estimate(pnl), _mc_estimate(pnl, {**mc_opts, "cv_seed": rep})
            est = np.array(pmap(one_rep, range(reps), threads))
            for col, name in ((0, "dd"), (1, "mc")):
                err = est[:, col] - scenario.effect
                rows.append({"t_periods": t, "rate": rate, "estimator": name,
                             "bias": float(err.mean()),
                             "mc_se": float(err.std(ddof=1) / np.sqrt(reps))})
    return rows


def simulate_berkson(scenario: SimScenario, reps: int, threads: int = 1,
                     mc_options: dict | None = None) -> list:
    """Attenuation of DD and MC under the measurement map y' = alpha + phi*y.

    Panels carry a clean injected effect and no trend selection; both
    estimators run on the transformed outcomes. Rows report mean estimates,
    the ratio to the injected effect, and Monte Carlo standard errors.
    """
    if scenario.selection_correlated:
        raise ValueError("attenuation study runs without trend selection")
    if scenario.berkson is None:
        raise ValueError("scenario needs a measurement map")
    mc_opts = {"cv_reps": 1, "max_iter": 600, "grid_n": 3, "grid_lo": 1e-2}
    mc_opts.update(mc_options or {})

    def one_rep(rep):
        rng = child_rng(scenario.seed, rep)
        pnl = generate_panel(scenario, rng=rng)
        return _dd_estimate(pnl), _mc_estimate(pnl, {**mc_opts, "cv_seed": rep})

    est = np.array(pmap(one_rep, range(reps), threads))
    rows = []
    for col, name in ((0, "dd"), (1, "mc")):
        vals = est[:, col]
        rows.append({"estimator": name, "phi": scenario.berkson.phi,
                     "alpha": scenario.berkson.alpha,
                     "mean_estimate": float(vals.mean()),
                     "ratio": float(vals.mean() / scenario.effect),
                     "mc_se": float(vals.std(ddof=1) / np.sqrt(reps))})
    return rows
