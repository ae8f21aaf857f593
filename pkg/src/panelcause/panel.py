"""Outcome-panel data model, CSV ingestion, grid-buffer treatment assignment,
and inverse-distance-weighted imputation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

EARTH_RADIUS_KM = 6371.0088


# ---------------------------------------------------------------------------
# Panel data model
# ---------------------------------------------------------------------------

@dataclass
class PanelMatrix:
    """N units x T periods of outcomes with an observation mask and treatment labels.

    values[i, t] is meaningful only where observed[i, t] is True.
    first_treat_period holds a period *index* (into period_labels) for treated
    units and -1 for controls.
    """

    values: np.ndarray
    observed: np.ndarray
    treated_unit: np.ndarray
    first_treat_period: np.ndarray
    unit_ids: list
    period_labels: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.observed = np.asarray(self.observed, dtype=bool)
        self.treated_unit = np.asarray(self.treated_unit, dtype=bool)
        self.first_treat_period = np.asarray(self.first_treat_period, dtype=int)
        self.period_labels = np.asarray(self.period_labels, dtype=int)
        n, t = self.values.shape
        if self.observed.shape != (n, t):
            raise ValueError("observed mask shape mismatch")
        if len(self.unit_ids) != n or self.treated_unit.shape != (n,):
            raise ValueError("unit labels shape mismatch")
        if self.first_treat_period.shape != (n,):
            raise ValueError("first_treat_period shape mismatch")
        if self.period_labels.shape != (t,):
            raise ValueError("period labels shape mismatch")
        if np.any(np.diff(self.period_labels) <= 0):
            raise ValueError("period labels must be strictly increasing")
        has_start = self.first_treat_period >= 0
        if not np.array_equal(has_start, self.treated_unit):
            raise ValueError("first_treat_period must be set exactly for treated units")
        if np.any(self.first_treat_period >= t):
            raise ValueError("first_treat_period out of range")

    @property
    def n_units(self) -> int:
        return self.values.shape[0]

    @property
    def n_periods(self) -> int:
        return self.values.shape[1]

    def treat_start(self) -> int:
        """Common adoption index; raises on staggered adoption or no treated units."""
        starts = np.unique(self.first_treat_period[self.treated_unit])
        if starts.size == 0:
            raise ValueError("panel has no treated units")
        if starts.size > 1:
            raise ValueError("staggered adoption is not supported")
        return int(starts[0])

    def treatment_mask(self) -> np.ndarray:
        """Boolean N x T mask of treated unit-periods (t >= adoption)."""
        tau = np.zeros(self.values.shape, dtype=bool)
        for i in np.flatnonzero(self.treated_unit):
            tau[i, self.first_treat_period[i]:] = True
        return tau

    def subset_units(self, idx) -> "PanelMatrix":
        idx = np.asarray(idx)
        return PanelMatrix(
            values=self.values[idx].copy(),
            observed=self.observed[idx].copy(),
            treated_unit=self.treated_unit[idx].copy(),
            first_treat_period=self.first_treat_period[idx].copy(),
            unit_ids=[self.unit_ids[i] for i in idx],
            period_labels=self.period_labels.copy(),
        )


def load_panel(path, schema: dict) -> PanelMatrix:
    """Read a delimited outcome panel.

    schema selects the layout:
      {"layout": "long", "unit": ..., "year": ..., "value": ...}  one row per
        unit-period; absent rows are unobserved cells.
      {"layout": "wide", "unit": ...}  one row per unit, one column per year
        (named like "y2006" or "2006"); empty fields are unobserved.

    Duplicate (unit, year) cells are an error. Treatment labels are attached
    separately with apply_treatment.
    """
    layout = schema.get("layout", "long")
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if df.shape[0] == 0:
        raise ValueError(f"{path}: empty panel file")
    if layout == "long":
        cols = [schema.get("unit", "unit_id"), schema.get("year", "year"),
                schema.get("value", "value")]
        for c in cols:
            if c not in df.columns:
                raise ValueError(f"{path}: missing column '{c}'")
        units = list(dict.fromkeys(df[cols[0]]))
        years = sorted({_parse_year(y, path, i) for i, y in enumerate(df[cols[1]], start=2)})
        uix = {u: i for i, u in enumerate(units)}
        tix = {y: t for t, y in enumerate(years)}
        values = np.zeros((len(units), len(years)))
        observed = np.zeros_like(values, dtype=bool)
        for rownum, (u, y, v) in enumerate(zip(df[cols[0]], df[cols[1]], df[cols[2]]), start=2):
            i, t = uix[u], tix[_parse_year(y, path, rownum)]
            if observed[i, t]:
                raise ValueError(f"{path}: row {rownum}: duplicate cell ({u}, {y})")
            values[i, t] = _parse_value(v, path, rownum)
            observed[i, t] = True
    elif layout == "wide":
        unit_col = schema.get("unit", "unit_id")
        if unit_col not in df.columns:
            raise ValueError(f"{path}: missing column '{unit_col}'")
        year_cols = [c for c in df.columns if c != unit_col]
        if not year_cols:
            raise ValueError(f"{path}: wide layout needs at least one year column")
        years = [_parse_year(c.lstrip("y"), path, 1) for c in year_cols]
        order = np.argsort(years)
        year_cols = [year_cols[k] for k in order]
        years = sorted(years)
        units = list(df[unit_col])
        if len(set(units)) != len(units):
            raise ValueError(f"{path}: duplicate unit rows in wide layout")
        values = np.zeros((len(units), len(years)))
        observed = np.zeros_like(values, dtype=bool)
        for i, (_, row) in enumerate(df.iterrows()):
            for t, c in enumerate(year_cols):
                cell = row[c].strip()
                if cell == "":
                    continue
                values[i, t] = _parse_value(cell, path, i + 2)
                observed[i, t] = True
    else:
        raise ValueError(f"unknown panel layout '{layout}'")
    n = len(units)
    return PanelMatrix(
        values=values,
        observed=observed,
        treated_unit=np.zeros(n, dtype=bool),
        first_treat_period=np.full(n, -1, dtype=int),
        unit_ids=units,
        period_labels=np.array(years, dtype=int),
    )


def save_panel(panel: PanelMatrix, path) -> None:
    """Write the observed cells as a long CSV (unit_id,year,value)."""
    from .util import write_csv
    rows = []
    for i in range(panel.n_units):
        for t in range(panel.n_periods):
            if panel.observed[i, t]:
                rows.append((panel.unit_ids[i], int(panel.period_labels[t]),
                             panel.values[i, t]))
    write_csv(path, ["unit_id", "year", "value"], rows)


def apply_treatment(panel: PanelMatrix, treated_ids, treat_year: int) -> PanelMatrix:
    """Return a copy with the given units flagged treated from treat_year on."""
    treated_ids = set(treated_ids)
    unknown = treated_ids - set(panel.unit_ids)
    if unknown:
        raise ValueError(f"treated ids not in panel: {sorted(unknown)[:5]}")
    where = np.flatnonzero(panel.period_labels == treat_year)
    if where.size == 0:
        raise ValueError(f"treat year {treat_year} not among panel periods")
    start = int(where[0])
    treated = np.array([u in treated_ids for u in panel.unit_ids])
    first = np.where(treated, start, -1)
    return PanelMatrix(panel.values.copy(), panel.observed.copy(), treated, first,
                       list(panel.unit_ids), panel.period_labels.copy())


def _parse_year(y, path, rownum) -> int:
    try:
        return int(y)
    except (TypeError, ValueError):
        raise ValueError(f"{path}: row {rownum}: bad year '{y}'") from None


def _parse_value(v, path, rownum) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ValueError(f"{path}: row {rownum}: non-numeric value '{v}'") from None


# ---------------------------------------------------------------------------
# Geography: units, grid polylines, buffer assignment
# ---------------------------------------------------------------------------

@dataclass
class GeoUnit:
    unit_id: str
    lon: float
    lat: float
    population_density: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.lon) and np.isfinite(self.lat)):
            raise ValueError(f"unit {self.unit_id}: non-finite coordinates")
        if self.population_density is not None and self.population_density < 0:
            raise ValueError(f"unit {self.unit_id}: negative density")


@dataclass
class GridNetwork:
    """Per-vintage sets of polylines; each vintage holds the lines newly added
    that year, each polyline an array of (lon, lat) vertices."""

    lines_by_vintage: dict = field(default_factory=dict)

    def __post_init__(self):
        clean: dict[int, list[np.ndarray]] = {}
        for vintage in sorted(self.lines_by_vintage):
            polys = []
            for line in self.lines_by_vintage[vintage]:
                arr = np.asarray(line, dtype=float)
                if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] != 2:
                    raise ValueError("each polyline needs >= 2 (lon, lat) vertices")
                polys.append(arr)
            clean[int(vintage)] = polys
        self.lines_by_vintage = clean

    @property
    def vintages(self) -> list[int]:
        return sorted(self.lines_by_vintage)

    def segments(self, vintages) -> np.ndarray:
        """Stack the (lon1, lat1, lon2, lat2) segments of the given vintages."""
        segs = []
        for v in vintages:
            for line in self.lines_by_vintage.get(v, []):
                segs.append(np.column_stack([line[:-1], line[1:]]))
        if not segs:
            return np.empty((0, 4))
        return np.vstack(segs)


@dataclass
class TreatmentAssignment:
    unit_id: str
    group: str  # treated | control | excluded
    distance_km: dict  # vintage year -> km to nearest segment of that vintage


def load_geo_units(path) -> list[GeoUnit]:
    """GeoUnit CSV: unit_id,lon,lat[,density]."""
    df = pd.read_csv(path, dtype={"unit_id": str})
    for c in ("unit_id", "lon", "lat"):
        if c not in df.columns:
            raise ValueError(f"{path}: missing column '{c}'")
    units = []
    for _, row in df.iterrows():
        dens = float(row["density"]) if "density" in df.columns and pd.notna(row["density"]) else None
        units.append(GeoUnit(str(row["unit_id"]), float(row["lon"]), float(row["lat"]), dens))
    return units


def load_grid(path) -> GridNetwork:
    """GeoJSON-style FeatureCollection of LineString/MultiLineString features,
    each carrying a 'vintage' year property."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    lines: dict[int, list] = {}
    for feat in doc.get("features", []):
        vintage = int(feat["properties"]["vintage"])
        geom = feat["geometry"]
        if geom["type"] == "LineString":
            parts = [geom["coordinates"]]
        elif geom["type"] == "MultiLineString":
            parts = geom["coordinates"]
        else:
            raise ValueError(f"{path}: unsupported geometry '{geom['type']}'")
        lines.setdefault(vintage, []).extend(parts)
    if not lines:
        raise ValueError(f"{path}: no line features")
    return GridNetwork(lines)


def haversine_km(lon1, lat1, lon2, lat2) -> np.ndarray:
    """Great-circle distance on a spherical Earth (km); arguments in degrees."""
    lon1, lat1, lon2, lat2 = map(np.radians, (np.asarray(lon1, dtype=float),
                                              np.asarray(lat1, dtype=float),
                                              np.asarray(lon2, dtype=float),
                                              np.asarray(lat2, dtype=float)))
    dlon = lon2 - lon1
    dlat = lat2 - lat1
    a = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def point_segment_km(lon, lat, segs: np.ndarray) -> float:
    """Minimum great-circle distance from one point to a set of segments.

    Uses the cross-track construction on the unit sphere: the perpendicular
    distance applies when the point projects inside the segment, otherwise
    the nearer endpoint wins.
    """
    if segs.shape[0] == 0:
        return float("inf")
    d1 = haversine_km(lon, lat, segs[:, 0], segs[:, 1])
    d2 = haversine_km(lon, lat, segs[:, 2], segs[:, 3])
    d12 = haversine_km(segs[:, 0], segs[:, 1], segs[:, 2], segs[:, 3])
    best = np.minimum(d1, d2)
    ok = d12 > 1e-9
    if np.any(ok):
        # bearings from segment start to segment end and to the point
        b12 = _bearing(segs[ok, 0], segs[ok, 1], segs[ok, 2], segs[ok, 3])
        b13 = _bearing(segs[ok, 0], segs[ok, 1], lon, lat)
        delta13 = d1[ok] / EARTH_RADIUS_KM
        xt = np.arcsin(np.clip(np.sin(delta13) * np.sin(b13 - b12), -1.0, 1.0))
        at = np.arccos(np.clip(np.cos(delta13) / np.maximum(np.cos(xt), 1e-12), -1.0, 1.0))
        inside = (np.cos(b13 - b12) >= 0.0) & (at <= d12[ok] / EARTH_RADIUS_KM)
        perp = np.abs(xt) * EARTH_RADIUS_KM
        cand = np.where(inside, perp, np.inf)
        best[ok] = np.minimum(best[ok], cand)
    return float(best.min())


def _bearing(lon1, lat1, lon2, lat2) -> np.ndarray:
    lon1, lat1, lon2, lat2 = map(np.radians, (np.asarray(lon1, dtype=float),
                                              np.asarray(lat1, dtype=float),
                                              np.asarray(lon2, dtype=float),
                                              np.asarray(lat2, dtype=float)))
    y = np.sin(lon2 - lon1) * np.cos(lat2)
    x = np.cos(lat1) * np.sin(lat2) - np.sin(lat1) * np.cos(lat2) * np.cos(lon2 - lon1)
    return np.arctan2(y, x)


def assign_treatment(units, grid: GridNetwork, treat_buffer_km: float,
                     control_exclusion_km: float, treat_vintages, study_end: int):
    """Classify units as treated, control, or excluded by grid-buffer distance.

    Treated: within treat_buffer_km of lines added during treat_vintages
    (inclusive year pair) and farther than the buffer from all earlier lines.
    Control: farther than control_exclusion_km from every line through
    study_end. Everything else is excluded.
    """
    if treat_buffer_km <= 0:
        raise ValueError("treat_buffer_km must be positive")
    if control_exclusion_km < treat_buffer_km:
        raise ValueError("control_exclusion_km must be >= treat_buffer_km")
    vintages = grid.vintages
    if not vintages:
        raise ValueError("empty grid network")
    v_lo, v_hi = int(treat_vintages[0]), int(treat_vintages[1])
    new_v = [v for v in vintages if v_lo <= v <= v_hi]
    pre_v = [v for v in vintages if v < v_lo]
    all_v = [v for v in vintages if v <= study_end]
    seg_cache = {v: grid.segments([v]) for v in vintages}

    out = []
    for u in units:
        dist = {v: point_segment_km(u.lon, u.lat, seg_cache[v]) for v in vintages}
        d_new = min((dist[v] for v in new_v), default=float("inf"))
        d_pre = min((dist[v] for v in pre_v), default=float("inf"))
        d_all = min((dist[v] for v in all_v), default=float("inf"))
        if d_new <= treat_buffer_km and d_pre > treat_buffer_km:
            group = "treated"
        elif d_all > control_exclusion_km:
            group = "control"
        else:
            group = "excluded"
        out.append(TreatmentAssignment(u.unit_id, group, dist))
    return out


def density_prefilter(units, assignments, top_treated_fraction: float = 0.01):
    """Drop zero-density units everywhere and the densest treated fraction.

    Returns the unit_ids to keep. Units without a density value are kept.
    """
    by_id = {u.unit_id: u for u in units}
    keep = []
    treated_density = []
    for a in assignments:
        dens = by_id[a.unit_id].population_density
        if dens is not None and dens == 0.0:
            continue
        if a.group == "treated" and dens is not None:
            treated_density.append((a.unit_id, dens))
        keep.append(a.unit_id)
    if treated_density and top_treated_fraction > 0:
        n_drop = int(np.floor(len(treated_density) * top_treated_fraction))
        if n_drop > 0:
            treated_density.sort(key=lambda p: (-p[1], p[0]))
            drop = {uid for uid, _ in treated_density[:n_drop]}
            keep = [uid for uid in keep if uid not in drop]
    return keep


# ---------------------------------------------------------------------------
# Inverse-distance-weighted imputation
# ---------------------------------------------------------------------------

@dataclass
class IdwResult:
    values: dict       # (unit_id, year) -> imputed value
    dropped: list      # targets with no in-radius same-year neighbor


def idw_impute(observations, targets, coords: dict, radius_km: float = 10.0,
               power: float = 1.0) -> IdwResult:
    """Impute target cells from same-year neighbors within radius_km.

    observations: iterable of (unit_id, year, value); targets: iterable of
    (unit_id, year); coords maps unit_id -> (lon, lat). Weights are
    distance^(-power) over observed same-year neighbors only; a zero-distance
    neighbor's value is taken exactly; targets with no in-radius neighbor are
    dropped and reported.
    """
    if radius_km <= 0 or power <= 0:
        raise ValueError("radius_km and power must be positive")
    observations = list(observations)
    targets = list(targets)
    if not observations:
        raise ValueError("no observations supplied")
    by_year: dict[int, list] = {}
    for uid, year, val in observations:
        lon, lat = coords[uid]
        by_year.setdefault(int(year), []).append((lon, lat, float(val)))
    values = {}
    dropped = []
    for uid, year in targets:
        neigh = by_year.get(int(year), [])
        if not neigh:
            dropped.append((uid, year))
            continue
        arr = np.array(neigh)
        lon, lat = coords[uid]
        d = haversine_km(lon, lat, arr[:, 0], arr[:, 1])
        in_r = d <= radius_km
        if not np.any(in_r):
            dropped.append((uid, year))
            continue
        d, v = d[in_r], arr[in_r, 2]
        zero = d < 1e-9
        if np.any(zero):
            values[(uid, year)] = float(v[zero].mean())
        else:
            w = d ** (-power)
            values[(uid, year)] = float(np.sum(w * v) / np.sum(w))
    return IdwResult(values=values, dropped=dropped)
