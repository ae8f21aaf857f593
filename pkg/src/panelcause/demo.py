"""Bundled synthetic demo inputs for the CLI and tests."""

from __future__ import annotations

import json
import os

import numpy as np

from .panel import save_panel
from .util import child_rng, write_csv
from .validation import SimScenario, generate_panel


def write_demo_inputs(out_dir, seed: int = 7) -> dict:
    """Write a small self-consistent input bundle; returns the file paths.

    Includes an asset table, a long outcome panel with a matching treatment
    file, split-prediction panels, and grid geography for the assignment
    command.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    rng = child_rng(seed, 0)

    # asset table: quality scores driven by a latent household wealth level
    n_house, n_cluster = 80, 8
    latent = rng.normal(0.0, 1.0, n_house)
    cluster = np.arange(n_house) % n_cluster
    year = np.where(np.arange(n_house) % 2 == 0, 2010, 2016)
    asset_names = ["floor_quality", "roof_quality", "water_supply", "owns_phone",
                   "has_electricity"]
    rows = []
    for i in range(n_house):
        scores = []
        for j, name in enumerate(asset_names):
            signal = latent[i] + rng.normal(0.0, 0.6)
            if name.startswith("owns_") or name.startswith("has_"):
                scores.append(int(signal > 0))
            else:
                scores.append(int(np.clip(np.round(3 + 1.2 * signal), 1, 5)))
        rows.append([f"h{i:03d}", f"c{cluster[i]}", int(year[i]), *scores])
    paths["assets"] = os.path.join(out_dir, "assets.csv")
    write_csv(paths["assets"], ["household_id", "cluster_id", "year", *asset_names], rows)

    # outcome panel + treatment labels + split predictions
    scenario = SimScenario(n_units=36, n_periods=11, treat_share=1 / 6,
                           effect=0.25, noise_sd=0.2, seed=seed)
    panel = generate_panel(scenario)
    panel.period_labels = np.arange(2006, 2017)
    paths["panel"] = os.path.join(out_dir, "panel.csv")
    save_panel(panel, paths["panel"])
    paths["treatment"] = os.path.join(out_dir, "treatment.csv")
    write_csv(paths["treatment"], ["unit_id", "group"],
              [(u, "treated" if t else "control")
               for u, t in zip(panel.unit_ids, panel.treated_unit)])
    split_paths = []
    for s in range(3):
        noisy = panel.subset_units(np.arange(panel.n_units))
        noisy.values = panel.values + child_rng(seed, 10 + s).normal(
            0.0, 0.05, panel.values.shape)
        p = os.path.join(out_dir, f"panel_split{s + 1}.csv")
        save_panel(noisy, p)
        split_paths.append(p)
    paths["splits"] = split_paths

    # geography: two grid vintages and a scatter of villages
    features = [
        {"type": "Feature",
         "properties": {"vintage": 2006},
         "geometry": {"type": "LineString",
                      "coordinates": [[32.00, 0.00], [32.00, 0.50]]}},
        {"type": "Feature",
         "properties": {"vintage": 2011},
         "geometry": {"type": "LineString",
                      "coordinates": [[32.40, 0.00], [32.40, 0.50]]}},
    ]
    paths["grid"] = os.path.join(out_dir, "grid.geojson")
    with open(paths["grid"], "w", encoding="utf-8") as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh, indent=1)
    geo_rows = []
    for i in range(24):
        lon = 31.9 + 0.03 * i
        lat = float(0.05 + 0.015 * (i % 7))
        geo_rows.append([f"v{i:02d}", round(lon, 4), round(lat, 4),
                         round(float(50 + 10 * (i % 5)), 1)])
    paths["geo"] = os.path.join(out_dir, "geo.csv")
    write_csv(paths["geo"], ["unit_id", "lon", "lat", "density"], geo_rows)
    return paths
