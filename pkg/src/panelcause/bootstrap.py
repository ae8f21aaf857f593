"""Bootstrap average-treatment-effect pipeline.

Each replicate draws one of the S model-split predictions for every unit-year
(imputation uncertainty), resamples control and treated units with
replacement (sampling uncertainty), reruns the chosen counterfactual
estimator, and records the per-year ATEs. Confidence intervals are percentile
intervals whose endpoints are order statistics of the recorded draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimators import counterfactual_matrix, effects_from_counterfactual
from .panel import PanelMatrix
from .util import child_rng, pmap


@dataclass
class SplitEnsemble:
    """S independent predicted values per unit-year, stacked N x T x S."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3 or self.values.shape[2] < 1:
            raise ValueError("ensemble must be N x T x S with S >= 1")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("ensemble has non-finite entries")

    @classmethod
    def from_splits(cls, splits) -> "SplitEnsemble":
        return cls(np.stack([np.asarray(s, dtype=float) for s in splits], axis=2))

    @property
    def n_splits(self) -> int:
        return self.values.shape[2]

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=2)


@dataclass
class BootstrapSummary:
    estimator: str
    reps: int
    years: np.ndarray        # post-treatment period labels
    draws: np.ndarray        # reps x n_post per-year ATE draws
    mean: np.ndarray
    lo95: np.ndarray
    hi95: np.ndarray
    retries: int = 0         # replicates redrawn after an estimator failure

    @property
    def final_year(self) -> tuple:
        """(mean, lo, hi) for the last post-treatment year."""
        return float(self.mean[-1]), float(self.lo95[-1]), float(self.hi95[-1])


def _percentile_order_stat(draws: np.ndarray, q: float, side: str) -> np.ndarray:
    method = "lower" if side == "lo" else "higher"
    return np.percentile(draws, q, axis=0, method=method)


def bootstrap_ate(ensemble: SplitEnsemble, panel: PanelMatrix, estimator: str,
                  reps: int = 100, seed: int = 0, n_control: int | None = None,
                  n_treated: int | None = None, resample: bool = True,
                  options: dict | None = None, threads: int = 1,
                  retry_cap: int = 10) -> BootstrapSummary:
    """Bootstrap the per-year ATEs of the chosen estimator.

    The panel supplies structure (mask, treatment labels, periods); outcome
    values come from the ensemble. Resample sizes default to the observed
    group sizes. With resample=False and S=1 the single replicate reproduces a
    direct estimator run. A replicate whose estimator fails is redrawn (up to
    retry_cap attempts) before the whole run aborts.
    """
    if estimator not in ("mc", "scen", "dd"):
        raise ValueError(f"unknown estimator '{estimator}'")
    ctrl = np.flatnonzero(~panel.treated_unit)
    trt = np.flatnonzero(panel.treated_unit)
    if ctrl.size < 2 or trt.size < 2:
        raise ValueError("need at least 2 control and 2 treated units")
    n_control = ctrl.size if n_control is None else int(n_control)
    n_treated = trt.size if n_treated is None else int(n_treated)
    start = panel.treat_start()
    n_post = panel.n_periods - start
    s_count = ensemble.n_splits
    if ensemble.values.shape[:2] != panel.values.shape:
        raise ValueError("ensemble/panel shape mismatch")

    def one_rep(rep: int):
        last_exc = None
        for attempt in range(retry_cap):
            rng = child_rng(seed, rep, attempt)
            split_choice = rng.integers(0, s_count, size=panel.values.shape)
            drawn = np.take_along_axis(ensemble.values, split_choice[:, :, None],
                                       axis=2)[:, :, 0]
            if resample:
                c = rng.choice(ctrl, size=n_control, replace=True)
                t = rng.choice(trt, size=n_treated, replace=True)
            else:
                c, t = ctrl, trt
            idx = np.concatenate([c, t])
            treated = np.concatenate([np.zeros(c.size, bool), np.ones(t.size, bool)])
            rep_panel = PanelMatrix(
                values=drawn[idx],
                observed=panel.observed[idx].copy(),
                treated_unit=treated,
                first_treat_period=np.where(treated, start, -1),
                unit_ids=[f"b{j}" for j in range(idx.size)],
                period_labels=panel.period_labels.copy(),
            )
            try:
                cf = counterfactual_matrix(rep_panel, estimator, options)
                res = effects_from_counterfactual(rep_panel, cf, estimator)
                return res.per_year_ate, attempt
            except Exception as exc:  # redraw and retry
                last_exc = exc
        raise RuntimeError(
            f"replicate {rep} failed {retry_cap} times; last error: {last_exc}")

    results = pmap(one_rep, range(reps), threads)
    draws = np.vstack([r[0] for r in results])
    assert draws.shape == (reps, n_post)
    return BootstrapSummary(
        estimator=estimator,
        reps=reps,
        years=panel.period_labels[start:].copy(),
        draws=draws,
        mean=draws.mean(axis=0),
        lo95=_percentile_order_stat(draws, 2.5, "lo"),
        hi95=_percentile_order_stat(draws, 97.5, "hi"),
        retries=int(sum(r[1] for r in results)),
    )


def ate_timepath(summary: BootstrapSummary) -> list:
    """Effect path for the 3rd through 6th post-treatment years.

    Offsets count from 1 at the adoption year; offsets outside the panel are
    simply absent. Rows: (year_offset, mean, lo, hi).
    """
    rows = []
    for k in range(summary.years.size):
        offset = k + 1
        if 3 <= offset <= 6:
            rows.append((offset, float(summary.mean[k]), float(summary.lo95[k]),
                         float(summary.hi95[k])))
    if not rows:  # short panels: report what exists
        rows = [(k + 1, float(summary.mean[k]), float(summary.lo95[k]),
                 float(summary.hi95[k])) for k in range(summary.years.size)]
    return rows
