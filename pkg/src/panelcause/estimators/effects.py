"""Treatment effects from an estimated counterfactual matrix, and a uniform
driver over the three counterfactual estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..panel import PanelMatrix
from .did import dd_impute_counterfactual
from .mc import default_lambda_grid, matrix_complete, mc_cv_lambda
from .scen import scen_cv_lambda, scen_fit


@dataclass
class EstimatorResult:
    estimator: str
    counterfactual: np.ndarray   # N x T, NaN outside treated post cells allowed
    post_periods: np.ndarray     # period indices
    post_labels: np.ndarray      # period labels (years)
    per_year_ate: np.ndarray
    ate: float                   # final-period ATE
    table: list                  # (unit_id, year, observed, counterfactual, effect)


def effects_from_counterfactual(panel: PanelMatrix, counterfactual,
                                estimator: str = "") -> EstimatorResult:
    """Per-cell effects (observed minus counterfactual) on treated post cells,
    averaged within year; the headline ATE is the final year's."""
    cf = np.asarray(counterfactual, dtype=float)
    if cf.shape != panel.values.shape:
        raise ValueError("counterfactual shape mismatch")
    start = panel.treat_start()
    post = np.arange(start, panel.n_periods)
    trt = np.flatnonzero(panel.treated_unit)
    need = panel.observed[np.ix_(trt, post)]
    if np.any(~np.isfinite(cf[np.ix_(trt, post)][need])):
        raise ValueError("counterfactual missing at a treated post-treatment cell")
    table = []
    per_year = np.full(post.size, np.nan)
    for k, t in enumerate(post):
        effects = []
        for i in trt:
            if not panel.observed[i, t]:
                continue
            obs = panel.values[i, t]
            eff = obs - cf[i, t]
            effects.append(eff)
            table.append((panel.unit_ids[i], int(panel.period_labels[t]), obs,
                          cf[i, t], eff))
        if effects:
            per_year[k] = float(np.mean(effects))
    return EstimatorResult(
        estimator=estimator,
        counterfactual=cf,
        post_periods=post,
        post_labels=panel.period_labels[post].copy(),
        per_year_ate=per_year,
        ate=float(per_year[-1]),
        table=table,
    )


def counterfactual_matrix(panel: PanelMatrix, estimator: str,
                          options: dict | None = None) -> np.ndarray:
    """Counterfactual N x T matrix for treated post cells by estimator name.

    estimator: "dd" (fixed-effects imputation), "mc" (matrix completion,
    options: lam or lambda_grid for CV), or "scen" (synthetic controls,
    options: lam or lambda_grid, alpha, mode).
    """
    opts = dict(options or {})
    if estimator == "dd":
        return dd_impute_counterfactual(panel)
    if estimator == "mc":
        fe = opts.get("fe", "two_way")
        lam = opts.get("lam")
        if lam is None:
            grid = opts.get("lambda_grid") or default_lambda_grid(
                panel, n=opts.get("grid_n", 4), fe=fe,
                lo=opts.get("grid_lo", 1e-4), hi=opts.get("grid_hi", 0.3))
            lam = mc_cv_lambda(panel, grid,
                               holdout_fraction=opts.get("holdout_fraction", 0.1),
                               reps=opts.get("cv_reps", 2),
                               seed=opts.get("cv_seed", 0), fe=fe)
        fit = matrix_complete(panel, lam, tol=opts.get("tol", 1e-6),
                              max_iter=opts.get("max_iter", 500), fe=fe)
        return fit.L_hat
    if estimator == "scen":
        alpha = opts.get("alpha", 0.5)
        lam = opts.get("lam")
        if lam is None:
            grid = opts.get("lambda_grid") or [1e-4, 1e-3, 1e-2, 1e-1, 1.0]
            lam = scen_cv_lambda(panel, grid, alpha=alpha,
                                 folds=opts.get("cv_folds", 5))
        fit = scen_fit(panel, lam, alpha=alpha, mode=opts.get("mode", "transposed"))
        return fit.counterfactual_matrix(panel)
    raise ValueError(f"unknown estimator '{estimator}'")


def estimate_effects(panel: PanelMatrix, estimator: str,
                     options: dict | None = None) -> EstimatorResult:
    cf = counterfactual_matrix(panel, estimator, options)
    return effects_from_counterfactual(panel, cf, estimator=estimator)
