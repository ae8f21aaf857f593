"""Asset-based wealth index: first principal component of household responses,
standardized across the construction sample and averaged per cluster."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd


@dataclass
class AssetTable:
    """Household x asset score matrix with cluster and survey-year labels.

    Scores are binary ownership (0/1) or ordinal quality (1-5); missing cells
    must be resolved before construction.
    """

    scores: np.ndarray
    asset_names: list
    household_ids: list
    cluster_id: np.ndarray
    year: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        h, a = self.scores.shape
        if a < 2:
            raise ValueError("need at least two asset columns")
        if h < a:
            raise ValueError("need at least as many households as assets")
        if len(self.asset_names) != a or len(self.household_ids) != h:
            raise ValueError("label shape mismatch")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("asset scores contain missing or non-finite cells")
        self.cluster_id = np.asarray(self.cluster_id)
        self.year = np.asarray(self.year, dtype=int)
        if self.cluster_id.shape != (h,) or self.year.shape != (h,):
            raise ValueError("cluster/year shape mismatch")


def load_asset_table(path) -> AssetTable:
    """AssetTable CSV: household_id,cluster_id,year,<asset columns...>."""
    df = pd.read_csv(path, dtype={"household_id": str, "cluster_id": str})
    for c in ("household_id", "cluster_id", "year"):
        if c not in df.columns:
            raise ValueError(f"{path}: missing column '{c}'")
    asset_cols = [c for c in df.columns if c not in ("household_id", "cluster_id", "year")]
    if len(asset_cols) < 2:
        raise ValueError(f"{path}: need at least two asset columns")
    try:
        scores = df[asset_cols].astype(float).to_numpy()
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric asset cell ({exc})") from None
    return AssetTable(scores, asset_cols, list(df["household_id"]),
                      df["cluster_id"].to_numpy(), df["year"].to_numpy())


@dataclass
class WealthIndex:
    household: np.ndarray          # per-household index, mean 0 / sd 1
    cluster_ids: list
    cluster_mean: np.ndarray       # unweighted mean of member households
    loadings: np.ndarray           # per retained asset column
    asset_names: list
    standardization: tuple         # (mean, sd) of the raw first-component scores


def build_index(table: AssetTable, exclude=()) -> WealthIndex:
    """First principal component of the standardized asset matrix.

    Excluded columns (for instance a household-electrification response that
    would bake the variable under study into the outcome) are dropped before
    factorization. Columns are centered and scaled to unit variance, the
    leading component is extracted by SVD, its sign is fixed so the index
    rises with the scaled row-sum, and the scores are re-standardized to
    mean 0 / sd 1 over all households.
    """
    exclude = set(exclude)
    keep = [j for j, name in enumerate(table.asset_names) if name not in exclude]
    if len(keep) < 2:
        raise ValueError("fewer than two asset columns remain after exclusions")
    x = table.scores[:, keep]
    h = x.shape[0]
    if h < 2:
        raise ValueError("need at least two households")
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    if np.any(sd == 0):
        bad = [table.asset_names[keep[j]] for j in np.flatnonzero(sd == 0)]
        raise ValueError(f"constant asset column(s): {bad}")
    z = (x - mu) / sd
    _, _, vt = np.linalg.svd(z, full_matrices=False)
    loadings = vt[0]
    raw = z @ loadings
    rowsum = z.sum(axis=1)
    if np.dot(raw, rowsum) < 0:
        loadings = -loadings
        raw = -raw
    raw_mean = float(raw.mean())
    raw_sd = float(raw.std())
    if raw_sd == 0:
        raise ValueError("degenerate index: first component has zero variance")
    household = (raw - raw_mean) / raw_sd
    ids, means = cluster_mean(household, table.cluster_id)
    return WealthIndex(
        household=household,
        cluster_ids=ids,
        cluster_mean=means,
        loadings=loadings,
        asset_names=[table.asset_names[j] for j in keep],
        standardization=(raw_mean, raw_sd),
    )


def cluster_mean(index: np.ndarray, cluster_id) -> tuple[list, np.ndarray]:
    """Arithmetic mean of the household index per cluster, ordered by id."""
    index = np.asarray(index, dtype=float)
    cluster_id = np.asarray(cluster_id)
    if index.shape != cluster_id.shape:
        raise ValueError("index/cluster length mismatch")
    ids = sorted(set(cluster_id.tolist()))
    means = np.array([index[cluster_id == c].mean() for c in ids])
    return ids, means


def quintile_bounds(values) -> np.ndarray:
    """Interior cut points at the 20/40/60/80 empirical percentiles.

    Membership is resolved by quintile_of: a value equal to a cut falls into
    the lower quintile, so ties are deterministic.
    """
    values = np.asarray(values, dtype=float)
    if values.size < 5:
        raise ValueError("need at least five values for quintile cuts")
    return np.quantile(values, [0.2, 0.4, 0.6, 0.8])


def quintile_of(values, cuts) -> np.ndarray:
    """0-based quintile membership under the ties-fall-downward rule."""
    return np.searchsorted(np.asarray(cuts), np.asarray(values, dtype=float),
                           side="left")
