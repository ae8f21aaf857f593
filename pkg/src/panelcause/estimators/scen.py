"""Synthetic controls with an elastic-net penalty.

The counterfactual for a treated unit is an intercept plus a penalized linear
combination fitted on controls; weights may be negative and need not sum to
one. Panels here have more units than periods, so the default mode is the
transposed one: each post-treatment period's control values are regressed on
the controls' pre-treatment years, and the fitted year weights are applied to
each treated unit's own pre-treatment series.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..panel import PanelMatrix


def soft_threshold(z: float, g: float) -> float:
    return np.sign(z) * max(abs(z) - g, 0.0)


def elastic_net(x, y, lam: float, alpha: float = 0.5, fit_intercept: bool = True,
                tol: float = 1e-9, max_iter: int = 2000):
    """Cyclic coordinate descent for

        (1/2n) ||y - b0 - X w||^2 + lam * (alpha ||w||_1 + (1-alpha)/2 ||w||^2)

    with an unpenalized intercept. Returns (b0, w). Iterates until the worst
    first-order optimality violation falls below tol relative to the gradient
    scale at w = 0.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    if not (0.0 <= alpha <= 1.0):
        raise ValueError("alpha must lie in [0, 1]")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = x.shape
    if fit_intercept:
        x_mean = x.mean(axis=0)
        y_mean = float(y.mean())
        xc = x - x_mean
        yc = y - y_mean
    else:
        x_mean = np.zeros(d)
        y_mean = 0.0
        xc, yc = x, y
    col_sq = (xc * xc).sum(axis=0) / n
    w = np.zeros(d)
    r = yc.copy()
    l1 = lam * alpha
    l2 = lam * (1.0 - alpha)
    scale = max(1.0, float(np.max(np.abs(xc.T @ yc))) / n if d else 1.0)
    for _ in range(max_iter):
        for j in range(d):
            if col_sq[j] == 0.0:
                continue
            old = w[j]
            rho = (xc[:, j] @ r) / n + col_sq[j] * old
            new = soft_threshold(rho, l1) / (col_sq[j] + l2)
            if new != old:
                r += xc[:, j] * (old - new)
                w[j] = new
        grad = -(xc.T @ r) / n + l2 * w
        viol = np.where(w != 0.0, np.abs(grad + l1 * np.sign(w)),
                        np.maximum(np.abs(grad) - l1, 0.0))
        if float(viol.max(initial=0.0)) <= tol * scale:
            break
    b0 = y_mean - float(x_mean @ w) if fit_intercept else 0.0
    return b0, w


@dataclass
class ScenFit:
    mode: str                  # "transposed" | "standard"
    alpha: float
    lam: float
    intercepts: dict           # transposed: post index -> b0; standard: treated id -> b0
    weights: dict              # transposed: post index -> per-pre-year w; standard: treated id -> per-control w
    counterfactual: np.ndarray # n_treated x n_post
    treated_ids: list
    post_periods: np.ndarray   # period indices
    pre_periods: np.ndarray

    def counterfactual_matrix(self, panel: PanelMatrix) -> np.ndarray:
        """Scatter the treated-cell counterfactuals into an N x T matrix (NaN
        elsewhere)."""
        out = np.full(panel.values.shape, np.nan)
        rows = [panel.unit_ids.index(u) for u in self.treated_ids]
        for k, i in enumerate(rows):
            out[i, self.post_periods] = self.counterfactual[k]
        return out


def _complete_rows(panel: PanelMatrix, rows, cols):
    rows = np.asarray(rows)
    ok = panel.observed[np.ix_(rows, cols)].all(axis=1)
    return rows[ok]


def scen_fit(panel: PanelMatrix, lam: float, alpha: float = 0.5,
             mode: str = "transposed", tol: float = 1e-9) -> ScenFit:
    """Fit synthetic-control counterfactuals for every treated post period."""
    if lam < 0:
        raise ValueError("lam must be non-negative")
    start = panel.treat_start()
    pre = np.arange(start)
    post = np.arange(start, panel.n_periods)
    if pre.size < 2:
        raise ValueError("need at least 2 pre-treatment periods")
    ctrl = np.flatnonzero(~panel.treated_unit)
    trt = np.flatnonzero(panel.treated_unit)
    if not panel.observed[np.ix_(trt, pre)].all():
        raise ValueError("treated units must be observed in every pre-treatment period")
    treated_ids = [panel.unit_ids[i] for i in trt]
    intercepts: dict = {}
    weights: dict = {}
    cf = np.full((trt.size, post.size), np.nan)

    if mode == "transposed":
        if ctrl.size < 2:
            raise ValueError("transposed mode needs at least 2 control units")
        trt_pre = panel.values[np.ix_(trt, pre)]
        for k, s in enumerate(post):
            rows = _complete_rows(panel, ctrl, pre)
            rows = rows[panel.observed[rows, s]]
            if rows.size < 2:
                raise ValueError(f"too few complete controls for period index {s}")
            b0, w = elastic_net(panel.values[np.ix_(rows, pre)],
                                panel.values[rows, s], lam, alpha, tol=tol)
            intercepts[int(s)] = b0
            weights[int(s)] = w
            cf[:, k] = b0 + trt_pre @ w
    elif mode == "standard":
        rows = _complete_rows(panel, ctrl, np.arange(panel.n_periods))
        if rows.size < 1:
            raise ValueError("standard mode needs fully observed controls")
        x = panel.values[np.ix_(rows, pre)].T  # pre periods x controls
        for k, i in enumerate(trt):
            b0, w = elastic_net(x, panel.values[i, pre], lam, alpha, tol=tol)
            uid = panel.unit_ids[i]
            intercepts[uid] = b0
            weights[uid] = w
            cf[k, :] = b0 + w @ panel.values[np.ix_(rows, post)]
    else:
        raise ValueError(f"unknown mode '{mode}'")

    return ScenFit(mode=mode, alpha=alpha, lam=lam, intercepts=intercepts,
                   weights=weights, counterfactual=cf, treated_ids=treated_ids,
                   post_periods=post, pre_periods=pre)


def scen_cv_lambda(panel: PanelMatrix, lambda_grid, alpha: float = 0.5,
                   folds: int = 5, tol: float = 1e-9,
                   return_scores: bool = False):
    """Pick the penalty by k-fold prediction error over control units.

    Each post-period regression is refit without one fold of controls and
    scored on that fold; ties go to the larger penalty.
    """
    grid = sorted(float(g) for g in lambda_grid)
    if not grid:
        raise ValueError("empty lambda grid")
    start = panel.treat_start()
    pre = np.arange(start)
    post = np.arange(start, panel.n_periods)
    ctrl = np.flatnonzero(~panel.treated_unit)
    rows = _complete_rows(panel, ctrl, np.concatenate([pre, post]))
    if rows.size < folds or folds < 2:
        raise ValueError("degenerate folds")
    fold_of = np.arange(rows.size) % folds
    best_lam, best_mse = grid[0], np.inf
    scores = []
    for lam in grid:
        sse, count = 0.0, 0
        for f in range(folds):
            train = rows[fold_of != f]
            test = rows[fold_of == f]
            for s in post:
                b0, w = elastic_net(panel.values[np.ix_(train, pre)],
                                    panel.values[train, s], lam, alpha, tol=tol)
                pred = b0 + panel.values[np.ix_(test, pre)] @ w
                sse += float(np.sum((pred - panel.values[test, s]) ** 2))
                count += test.size
        mse = sse / count
        scores.append((lam, mse))
        if mse <= best_mse:
            best_lam, best_mse = lam, mse
    if return_scores:
        return best_lam, scores
    return best_lam
