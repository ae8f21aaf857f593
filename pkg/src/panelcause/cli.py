"""Command-line front end.

Subcommands: index, estimate, validate, simulate, sweep-loss, assign.
Parameters come from an INI config file (one section per command) with CLI
overrides; the fully resolved values are echoed into the output directory so
every run is a complete reproduction bundle. All outputs are CSV or SVG.

Exit codes: 0 success, 2 configuration error, 3 computation failure.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys

import numpy as np
import pandas as pd

from . import svgplot
from .bootstrap import SplitEnsemble, ate_timepath, bootstrap_ate
from .estimators import (dd_two_unit, estimate_effects, mc_cv_lambda,
                         pretrend_test, scen_cv_lambda)
from .estimators.mc import default_lambda_grid
from .loss import BerksonMap, LossConfig, hetero_task, sweep_lambda_b
from .panel import (apply_treatment, assign_treatment, density_prefilter,
                    load_geo_units, load_grid, load_panel)
from .util import write_csv
from .validation import (SimScenario, kfold_control_cv, placebo_last_pretreat,
                         simulate_berkson, simulate_pretrend)
from .wealth import build_index, load_asset_table


class ConfigError(Exception):
    pass


def _parse_bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean '{v}'")


def _parse_list(conv):
    def inner(v: str):
        v = v.strip()
        return [conv(p.strip()) for p in v.split(",") if p.strip() != ""]
    return inner


# key -> (parser, default); None default means "unset"
_SCHEMAS = {
    "index": {
        "assets": (str, None),
        "exclude": (_parse_list(str), []),
    },
    "estimate": {
        "panel": (str, None),
        "layout": (str, "long"),
        "treatment": (str, None),
        "treat_year": (int, None),
        "estimator": (str, "mc"),
        "mode": (str, ""),
        "alpha": (float, 0.5),
        "lam": (float, None),
        "lambda_grid": (_parse_list(float), []),
        "reps": (int, 100),
        "splits": (_parse_list(str), []),
        "n_control": (int, None),
        "n_treated": (int, None),
        "t0": (float, None),
        "t1": (float, None),
        "c0": (float, None),
        "c1": (float, None),
    },
    "validate": {
        "panel": (str, None),
        "layout": (str, "long"),
        "treatment": (str, None),
        "treat_year": (int, None),
        "k": (int, 10),
        "placebo_reps": (int, 100),
        "estimators": (_parse_list(str), ["dd", "mc", "scen"]),
    },
    "simulate": {
        "study": (_parse_list(str), ["pretrend", "berkson"]),
        "n_units": (int, 80),
        "n_periods": (_parse_list(int), [20]),
        "treat_share": (float, 0.125),
        "effect": (float, 1.0),
        "rates": (_parse_list(float), [0.1, 0.175, 0.25]),
        "drift_share": (float, 0.3),
        "noise_sd": (float, 0.3),
        "reps": (int, 200),
        "phi": (float, 0.6),
        "map_alpha": (float, 0.0),
        "berkson_n_periods": (int, 10),
    },
    "sweep-loss": {
        "n_train": (int, 3000),
        "n_val": (int, 2000),
        "n_features": (int, 4),
        "lambda_bs": (_parse_list(float), [0.0, 1.0, 3.0, 5.0, 7.5]),
        "lambda_r": (float, 1e-4),
        "batch_size": (int, 90),
        "learning_rate": (float, 0.02),
        "decay": (float, 0.96),
        "epochs": (int, 150),
        "hidden": (int, 0),
    },
    "assign": {
        "units": (str, None),
        "grid": (str, None),
        "treat_buffer_km": (float, 2.0),
        "control_exclusion_km": (float, 2.0),
        "treat_from": (int, 2011),
        "treat_to": (int, 2012),
        "study_end": (int, 2016),
        "density_filter": (_parse_bool, False),
    },
}


def _resolve_config(command: str, config_path, overrides: dict) -> dict:
    schema = _SCHEMAS[command]
    raw: dict[str, str] = {}
    if config_path:
        parser = configparser.ConfigParser()
        read = parser.read(config_path)
        if not read:
            raise ConfigError(f"config file not found: {config_path}")
        if parser.has_section(command):
            raw.update(dict(parser.items(command)))
    raw.update(overrides)
    cfg = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown key '{key}' for command '{command}'")
        conv = schema[key][0]
        try:
            cfg[key] = conv(value) if isinstance(value, str) else value
        except ConfigError:
            raise
        except Exception:
            raise ConfigError(f"bad value for '{key}': {value!r}") from None
    for key, (_, default) in schema.items():
        cfg.setdefault(key, default)
    return cfg


def _require(cfg: dict, *keys):
    for k in keys:
        if cfg[k] is None:
            raise ConfigError(f"missing required key '{k}'")


def _echo_config(out: str, command: str, cfg: dict, seed: int) -> None:
    # threads are deliberately omitted: they never change results
    lines = ["[global]", f"seed = {seed}", "", f"[{command}]"]
    for key in sorted(cfg):
        v = cfg[key]
        if isinstance(v, list):
            v = ",".join(str(p) for p in v)
        lines.append(f"{key} = {v}")
    with open(os.path.join(out, "effective_config.ini"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _load_labeled_panel(cfg: dict):
    panel = load_panel(cfg["panel"], {"layout": cfg["layout"]})
    df = pd.read_csv(cfg["treatment"], dtype=str)
    for c in ("unit_id", "group"):
        if c not in df.columns:
            raise ConfigError(f"{cfg['treatment']}: missing column '{c}'")
    group = dict(zip(df["unit_id"], df["group"]))
    keep = [i for i, u in enumerate(panel.unit_ids)
            if group.get(u, "control") != "excluded"]
    panel = panel.subset_units(np.array(keep))
    treated = [u for u in panel.unit_ids if group.get(u) == "treated"]
    if not treated:
        raise ConfigError("treatment file labels no panel unit as treated")
    return apply_treatment(panel, treated, cfg["treat_year"])


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_index(cfg, out, seed, threads) -> None:
    _require(cfg, "assets")
    table = load_asset_table(cfg["assets"])
    wi = build_index(table, exclude=cfg["exclude"])
    write_csv(os.path.join(out, "wealth_household.csv"),
              ["household_id", "cluster_id", "year", "wi"],
              [(h, c, int(y), v) for h, c, y, v in
               zip(table.household_ids, table.cluster_id, table.year, wi.household)])
    write_csv(os.path.join(out, "wealth_cluster.csv"), ["cluster_id", "wi"],
              list(zip(wi.cluster_ids, wi.cluster_mean)))
    write_csv(os.path.join(out, "loadings.csv"), ["asset", "loading"],
              list(zip(wi.asset_names, wi.loadings)))


def _estimator_options(cfg, panel, out, seed):
    est = cfg["estimator"]
    opts = {"cv_seed": seed}
    if cfg["mode"] and est == "scen":
        opts["mode"] = cfg["mode"]
    if est == "scen":
        opts["alpha"] = cfg["alpha"]
    if cfg["lam"] is not None:
        opts["lam"] = cfg["lam"]
        return opts
    grid = cfg["lambda_grid"]
    if est == "mc":
        grid = grid or default_lambda_grid(panel)
        lam, scores = mc_cv_lambda(panel, grid, reps=2, seed=seed,
                                   return_scores=True)
        write_csv(os.path.join(out, "cv_trace.csv"), ["lambda", "score"], scores)
        opts["lam"] = lam
    elif est == "scen":
        grid = grid or [1e-4, 1e-3, 1e-2, 1e-1, 1.0]
        lam, scores = scen_cv_lambda(panel, grid, alpha=cfg["alpha"],
                                     return_scores=True)
        write_csv(os.path.join(out, "cv_trace.csv"), ["lambda", "score"], scores)
        opts["lam"] = lam
    return opts


def cmd_estimate(cfg, out, seed, threads) -> None:
    if cfg["estimator"] == "dd" and cfg["mode"] == "two-unit":
        _require(cfg, "t0", "t1", "c0", "c1")
        beta = dd_two_unit(cfg["t0"], cfg["t1"], cfg["c0"], cfg["c1"])
        write_csv(os.path.join(out, "dd_two_unit.csv"), ["beta"], [(beta,)])
        print(f"beta = {beta!r}")
        return
    _require(cfg, "panel", "treatment", "treat_year")
    if cfg["estimator"] not in ("mc", "scen", "dd"):
        raise ConfigError(f"unknown estimator '{cfg['estimator']}'")
    panel = _load_labeled_panel(cfg)
    opts = _estimator_options(cfg, panel, out, seed)
    result = estimate_effects(panel, cfg["estimator"], opts)
    write_csv(os.path.join(out, "effects.csv"),
              ["unit_id", "year", "observed", "counterfactual", "effect"],
              result.table)

    if cfg["splits"]:
        splits = []
        for p in cfg["splits"]:
            sp = load_panel(p, {"layout": cfg["layout"]})
            if sp.unit_ids != list(panel.unit_ids) or \
                    not np.array_equal(sp.period_labels, panel.period_labels):
                order = [sp.unit_ids.index(u) for u in panel.unit_ids]
                sp = sp.subset_units(np.array(order))
            splits.append(sp.values)
        ensemble = SplitEnsemble.from_splits(splits)
    else:
        ensemble = SplitEnsemble(panel.values[:, :, None])
    summary = bootstrap_ate(ensemble, panel, cfg["estimator"], reps=cfg["reps"],
                            seed=seed, n_control=cfg["n_control"],
                            n_treated=cfg["n_treated"], options=opts,
                            threads=threads)
    write_csv(os.path.join(out, "ate_draws.csv"), ["rep", "year", "ate"],
              [(r, int(y), summary.draws[r, k])
               for r in range(summary.reps)
               for k, y in enumerate(summary.years)])
    write_csv(os.path.join(out, "ate_summary.csv"), ["year", "mean", "lo95", "hi95"],
              [(int(y), m, lo, hi) for y, m, lo, hi in
               zip(summary.years, summary.mean, summary.lo95, summary.hi95)])
    write_csv(os.path.join(out, "ate_timepath.csv"),
              ["year_offset", "mean", "lo95", "hi95"], ate_timepath(summary))

    years = panel.period_labels.astype(float)
    trt, ctl = panel.treated_unit, ~panel.treated_unit
    obs = np.where(panel.observed, panel.values, np.nan)
    treated_mean = np.nanmean(obs[trt], axis=0)
    control_mean = np.nanmean(obs[ctl], axis=0)
    cf_mean = np.nanmean(result.counterfactual[trt], axis=0)
    svgplot.line_chart(
        os.path.join(out, "counterfactual.svg"),
        {"treated": (years, treated_mean),
         "control": (years, control_mean),
         "counterfactual": (years, cf_mean, True)},
        title=f"{cfg['estimator']} counterfactual", x_label="year", y_label="outcome")


def cmd_validate(cfg, out, seed, threads) -> None:
    _require(cfg, "panel", "treatment", "treat_year")
    panel = _load_labeled_panel(cfg)
    kfold_rows, placebo_rows = [], []
    for est in cfg["estimators"]:
        opts = {"cv_seed": seed}
        report = kfold_control_cv(panel, k=cfg["k"], estimator=est, options=opts)
        for y, d in zip(report.years, report.mean_difference):
            kfold_rows.append((est, int(y), d, report.rmse))
        err = placebo_last_pretreat(panel, est, reps=cfg["placebo_reps"],
                                    seed=seed, options=opts, threads=threads)
        placebo_rows.append((est, err))
    write_csv(os.path.join(out, "validate_kfold.csv"),
              ["estimator", "year", "mean_difference", "rmse"], kfold_rows)
    write_csv(os.path.join(out, "validate_placebo.csv"),
              ["estimator", "mean_error"], placebo_rows)
    res = pretrend_test(panel, panel.treat_start() - 1)
    write_csv(os.path.join(out, "validate_pretrend.csv"),
              ["beta", "se", "p_value", "reject_95", "reject_90"],
              [(res.beta, res.se, res.p_value, res.reject_95, res.reject_90)])


def cmd_simulate(cfg, out, seed, threads) -> None:
    if "pretrend" in cfg["study"]:
        scenario = SimScenario(n_units=cfg["n_units"], n_periods=cfg["n_periods"][0],
                               treat_share=cfg["treat_share"], effect=cfg["effect"],
                               pretrend_rate=cfg["rates"][0],
                               drift_share=cfg["drift_share"],
                               selection_correlated=True,
                               noise_sd=cfg["noise_sd"], seed=seed)
        rows = simulate_pretrend(scenario, cfg["reps"], rates=cfg["rates"],
                                 periods=cfg["n_periods"], threads=threads)
        write_csv(os.path.join(out, "pretrend_bias.csv"),
                  ["t_periods", "rate", "estimator", "bias", "mc_se"],
                  [(r["t_periods"], r["rate"], r["estimator"], r["bias"], r["mc_se"])
                   for r in rows])
        t0 = cfg["n_periods"][0]
        series = {}
        for est in ("dd", "mc"):
            pts = [(r["rate"], r["bias"]) for r in rows
                   if r["estimator"] == est and r["t_periods"] == t0]
            series[est] = ([p[0] for p in pts], [p[1] for p in pts], est == "mc")
        svgplot.line_chart(os.path.join(out, "pretrend_bias.svg"), series,
                           title=f"estimator bias vs trend-selection rate (T={t0})",
                           x_label="pre-trend rate", y_label="bias")
    if "berkson" in cfg["study"]:
        scenario = SimScenario(n_units=cfg["n_units"],
                               n_periods=cfg["berkson_n_periods"],
                               treat_share=cfg["treat_share"], effect=cfg["effect"],
                               noise_sd=cfg["noise_sd"],
                               berkson=BerksonMap(cfg["map_alpha"], cfg["phi"]),
                               seed=seed)
        rows = simulate_berkson(scenario, cfg["reps"], threads=threads)
        write_csv(os.path.join(out, "berkson.csv"),
                  ["estimator", "phi", "alpha", "mean_estimate", "ratio", "mc_se"],
                  [(r["estimator"], r["phi"], r["alpha"], r["mean_estimate"],
                    r["ratio"], r["mc_se"]) for r in rows])
        svgplot.line_chart(
            os.path.join(out, "berkson.svg"),
            {r["estimator"]: ([0.0, 1.0], [r["mean_estimate"], r["mean_estimate"]],
                              r["estimator"] == "mc") for r in rows},
            title=f"mean estimate under compression (phi={cfg['phi']:g})",
            x_label="", y_label="mean estimate")


def cmd_sweep_loss(cfg, out, seed, threads) -> None:
    train, val = hetero_task(cfg["n_train"], cfg["n_val"],
                             n_features=cfg["n_features"], seed=seed)
    base = LossConfig(lambda_r=cfg["lambda_r"], lambda_b=0.0,
                      batch_size=cfg["batch_size"],
                      learning_rate=cfg["learning_rate"], decay=cfg["decay"],
                      epochs=cfg["epochs"], seed=seed)
    records, chosen = sweep_lambda_b(train, val, cfg["lambda_bs"], base,
                                     hidden=cfg["hidden"])
    write_csv(os.path.join(out, "sweep_loss.csv"), ["lambda_b", "phi", "r2"],
              [(r["lambda_b"], r["phi"], r["r2"]) for r in records])
    write_csv(os.path.join(out, "sweep_choice.csv"), ["lambda_b"], [(chosen,)])
    write_csv(os.path.join(out, "training_history.csv"),
              ["lambda_b", "epoch", "mse", "l2", "eb", "total"],
              [(r["lambda_b"], h["epoch"], h["mse"], h["l2"], h["eb"], h["total"])
               for r in records for h in r["model"].training_history])
    best = next(r["model"] for r in records if r["lambda_b"] == chosen)
    rows = []
    for name, arr in best.parameters.items():
        a = np.asarray(arr)
        if a.ndim == 0:
            rows.append((name, float(a)))
        else:
            rows.extend((name + "[" + ",".join(map(str, idx)) + "]", v)
                        for idx, v in np.ndenumerate(a))
    write_csv(os.path.join(out, "model_parameters.csv"),
              ["parameter", "value"], rows)
    svgplot.line_chart(
        os.path.join(out, "sweep_loss.svg"),
        {"phi": ([r["lambda_b"] for r in records], [r["phi"] for r in records]),
         "r2": ([r["lambda_b"] for r in records], [r["r2"] for r in records], True)},
        title="fitted slope and r2 by bias penalty", x_label="bias penalty",
        y_label="value")


def cmd_assign(cfg, out, seed, threads) -> None:
    _require(cfg, "units", "grid")
    units = load_geo_units(cfg["units"])
    grid = load_grid(cfg["grid"])
    assignments = assign_treatment(units, grid, cfg["treat_buffer_km"],
                                   cfg["control_exclusion_km"],
                                   (cfg["treat_from"], cfg["treat_to"]),
                                   cfg["study_end"])
    if cfg["density_filter"]:
        keep = set(density_prefilter(units, assignments))
        assignments = [a for a in assignments if a.unit_id in keep]
    vintages = grid.vintages
    write_csv(os.path.join(out, "assignment.csv"),
              ["unit_id", "group"] + [f"dist_{v}" for v in vintages],
              [(a.unit_id, a.group, *[a.distance_km[v] for v in vintages])
               for a in assignments])


_COMMANDS = {
    "index": cmd_index,
    "estimate": cmd_estimate,
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "sweep-loss": cmd_sweep_loss,
    "assign": cmd_assign,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="panelcause",
                                     description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key")
        if name == "estimate":
            p.add_argument("--estimator", default=None)
            p.add_argument("--mode", default=None)
            p.add_argument("--lambda", dest="lam", default=None)
            p.add_argument("--lambda-grid", dest="lambda_grid", default=None)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {}
    for item in args.set:
        if "=" not in item:
            print(f"error: bad --set '{item}' (expected KEY=VALUE)", file=sys.stderr)
            return 2
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    for flag in ("estimator", "mode", "lam", "lambda_grid"):
        if getattr(args, flag, None) is not None:
            overrides[flag] = getattr(args, flag)
    try:
        cfg = _resolve_config(args.command, args.config, overrides)
        if args.seed < 0:
            raise ConfigError("seed must be non-negative")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    try:
        _echo_config(args.out, args.command, cfg, args.seed)
        _COMMANDS[args.command](cfg, args.out, args.seed, args.threads)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
