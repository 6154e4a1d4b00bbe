"""Command-line driver: config ingestion, study orchestration, artifacts.

Every run resolves one scenario (a named preset or an explicit parameter
record, plus optional overrides), executes one study command, and writes
machine-readable artifacts plus a manifest echoing the fully resolved
configuration. Feeding a manifest back as ``--config`` reproduces the run
bit-for-bit. Unknown configuration keys are errors, never silent defaults.

Exit codes: 0 success, 2 validation or stability rejection, 1 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .params import ModelParams, ParamError, PRESETS, check_stability, preset
from .qbd import SolverError, UnstableModelError, build_blocks, solve, solve_params, validate_mmc, dump_blocks_csv
from .optimize import (bed_combination_scan, compare_nested_fixed,
                       evaluate, optimize_capacity, optimize_theta)
from .sensitivity import (RATIO_NAMES, SensitivityError, proportional_sweep,
                          scenario_grid, tornado)
from .simulate import EVENT_CODES, SimConfig, simulate

COMMANDS = ("solve", "optimize", "capacity", "compare-fixed", "tornado",
            "scenarios", "proportional", "simulate", "validate")

# "tool" and "version" let a manifest be re-fed as a config verbatim
_TOP_KEYS = {"preset", "scenario", "overrides", "command", "options",
             "output_dir", "format", "tool", "version"}
_FORMATS = ("csv", "json")

_OPTION_KEYS = {
    "solve": {"mode", "dump_blocks"},
    "optimize": {"mode"},
    "capacity": {"mode", "c_total"},
    "compare-fixed": {"theta_grid"},
    "tornado": {"variation", "theta"},
    "scenarios": {"variation"},
    "proportional": {"ratio", "values"},
    "simulate": {"horizon", "warmup", "replications", "seed", "mode",
                 "event_log"},
    "validate": {"max_error"},
}


class ConfigError(ValueError):
    pass


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, np.integer):
        return str(int(v))
    if isinstance(v, float):
        return repr(float(v))  # shortest round-trip representation
    return str(v)


def write_csv(path: Path, header, rows):
    out = []
    w_target = []

    class _Sink:
        def write(self, s):
            w_target.append(s)
            return len(s)

    w = csv.writer(_Sink(), lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt_cell(v) for v in row])
    _atomic_write(path, "".join(w_target))
    return path


def write_json(path: Path, obj):
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True,
                                   allow_nan=True) + "\n")
    return path


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, (np.floating, np.integer)):
        return _json_safe(v.item())
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(cfg) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    if cfg.get("tool") not in (None, "edthreshold"):
        raise ConfigError(f"config written by a different tool: {cfg['tool']!r}")
    return cfg


def resolve_scenario(cfg: dict, cli_preset=None, cli_overrides=None) -> ModelParams:
    """Exactly one scenario source, overrides applied after preset load."""
    src_preset = cli_preset or cfg.get("preset")
    scenario = cfg.get("scenario")
    if (src_preset is None) == (scenario is None):
        raise ConfigError(
            "need exactly one scenario source: --preset/preset or scenario")
    overrides = dict(cfg.get("overrides") or {})
    overrides.update(cli_overrides or {})
    if src_preset is not None:
        return preset(src_preset, **overrides)
    merged = dict(scenario)
    merged.update(overrides)
    return ModelParams.from_dict(merged)


def _manifest(outdir: Path, command: str, params: ModelParams, options: dict,
              fmt: str):
    doc = {
        "tool": "edthreshold",
        "version": __version__,
        "command": command,
        "scenario": _json_safe(params.to_dict()),
        "options": _json_safe(options),
        "format": fmt,
    }
    return write_json(outdir / "manifest.json", doc)


def _metric_columns(metrics, objective):
    cols = {}
    cols.update(metrics.to_dict())
    cols.update(objective.to_dict())
    return cols


# ---------------------------------------------------------------- commands


def cmd_solve(params, opts, outdir, fmt):
    mode = opts.get("mode", "nested")
    res = evaluate(params, mode=mode)
    cols = _metric_columns(res.metrics, res.objective)
    write_json(outdir / "metrics.json", _json_safe(cols))
    write_csv(outdir / "metrics.csv", list(cols), [list(cols.values())])
    if opts.get("dump_blocks"):
        blocks = build_blocks(params)
        dist = solve(blocks)
        dump_blocks_csv(blocks, dist, outdir / "blocks")
    return 0


def cmd_optimize(params, opts, outdir, fmt):
    mode = opts.get("mode", "nested")
    curve = optimize_theta(params, mode=mode)
    header = None
    rows = []
    for pt in curve.rows:
        cols = {"theta": pt.theta}
        cols.update(_metric_columns(pt.metrics, pt.objective))
        if header is None:
            header = list(cols)
        rows.append(list(cols.values()))
    write_csv(outdir / "theta_curve.csv", header, rows)
    if fmt == "json":
        write_json(outdir / "theta_curve.json", _json_safe(
            [dict(zip(header, row)) for row in rows]))
    write_json(outdir / "summary.json", _json_safe(
        {"mode": mode, "theta_star": curve.theta_star, "Z_star": curve.Z_star}))
    return 0


def cmd_capacity(params, opts, outdir, fmt):
    mode = opts.get("mode", "nested")
    if mode == "both":
        table = bed_combination_scan(params, c_total=opts.get("c_total"))
        header = ["c_u", "c_n", "nested_theta_star", "nested_Z",
                  "fixed_theta_star", "fixed_Z", "difference", "winner",
                  "fixed_reference", "fixed_deviation"]
        rows = [[r.c_u, r.c_n, r.nested_theta_star, r.nested_Z,
                 r.fixed_theta_star, r.fixed_Z, r.difference, r.winner,
                 r.fixed_reference, r.fixed_deviation] for r in table.rows]
        write_csv(outdir / "bed_combination_scan.csv", header, rows)
        if fmt == "json":
            write_json(outdir / "bed_combination_scan.json", _json_safe(
                [dict(zip(header, row)) for row in rows]))
        write_json(outdir / "summary.json", _json_safe({
            "mode": mode, "c_total": table.c_total,
            "nested_wins": table.nested_wins, "fixed_wins": table.fixed_wins,
            "ties": table.ties}))
        return 0
    scan = optimize_capacity(params, c_total=opts.get("c_total"), mode=mode)
    header = ["c_u", "c_n", "stable", "intensity", "theta_star", "Z_star"]
    rows = [[r.c_u, r.c_n, r.stable, r.intensity, r.theta_star, r.Z_star]
            for r in scan.rows]
    write_csv(outdir / "capacity_scan.csv", header, rows)
    if fmt == "json":
        write_json(outdir / "capacity_scan.json", _json_safe(
            [dict(zip(header, row)) for row in rows]))
    best = scan.best
    write_json(outdir / "summary.json", _json_safe({
        "mode": mode, "c_total": scan.c_total,
        "best": None if best is None else {
            "c_u": best.c_u, "c_n": best.c_n,
            "theta_star": best.theta_star, "Z_star": best.Z_star}}))
    return 0


def _parse_theta_grid(spec_text, k):
    if spec_text is None:
        return None
    if isinstance(spec_text, list):
        return [int(v) for v in spec_text]
    text = str(spec_text)
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",")]


def cmd_compare_fixed(params, opts, outdir, fmt):
    grid = _parse_theta_grid(opts.get("theta_grid"), params.k)
    table = compare_nested_fixed(params, theta_grid=grid)
    header = ["theta", "nested_Z", "fixed_Z", "difference", "winner",
              "fixed_reference", "fixed_deviation"]
    rows = [[r.theta, r.nested_Z, r.fixed_Z, r.difference, r.winner,
             r.fixed_reference, r.fixed_deviation] for r in table.rows]
    write_csv(outdir / "compare_fixed.csv", header, rows)
    if fmt == "json":
        write_json(outdir / "compare_fixed.json", _json_safe(
            [dict(zip(header, row)) for row in rows]))
    deviations = [
        {"theta": r.theta, "computed_fixed": r.fixed_Z,
         "reference": r.fixed_reference, "deviation": r.fixed_deviation}
        for r in table.rows if r.fixed_deviation is not None]
    write_json(outdir / "summary.json", _json_safe({
        "nested_wins": table.nested_wins, "fixed_wins": table.fixed_wins,
        "ties": table.ties,
        "fixed_reference_note": (
            "published fixed-column figures are attached for traceability; "
            "they do not follow from the partitioned model's equations and "
            "the simulation oracle agrees with the computed column"
            if deviations else None),
        "fixed_deviations": deviations}))
    return 0


def cmd_tornado(params, opts, outdir, fmt):
    report = tornado(params, variation=float(opts.get("variation", 0.05)),
                     theta=opts.get("theta"))
    header = ["rank", "ratio", "base_value", "low_value", "high_value",
              "delta_low", "delta_high", "impact", "rel_impact_pct", "error"]
    rows = [[r.rank, r.ratio, r.base_value, r.low_value, r.high_value,
             r.delta_low, r.delta_high, r.impact, r.rel_impact_pct, r.error]
            for r in report.rows]
    write_csv(outdir / "tornado.csv", header, rows)
    if fmt == "json":
        write_json(outdir / "tornado.json", _json_safe(
            [dict(zip(header, row)) for row in rows]))
    write_json(outdir / "summary.json", _json_safe({
        "baseline_Z": report.baseline_Z, "theta": report.theta,
        "variation": report.variation,
        "top_ratio": report.rows[0].ratio if report.rows else None}))
    return 0


def cmd_scenarios(params, opts, outdir, fmt):
    table = scenario_grid(params, variation=float(opts.get("variation", 0.05)))
    header = ["case", "description", "stable", "baseline_obj", "theta_star",
              "theta_over_k", "top_ratio", "rel_impact_pct", "enabled_Z",
              "disabled_Z", "benefit", "gain_pct", "notes"]
    rows = [[r.key, r.description, r.stable, r.baseline_obj, r.theta_star,
             r.theta_over_k, r.top_ratio, r.top_rel_impact_pct, r.enabled_Z,
             r.disabled_Z, r.benefit, r.gain_pct, "; ".join(r.notes)]
            for r in table.rows]
    write_csv(outdir / "scenario_grid.csv", header, rows)
    if fmt == "json":
        write_json(outdir / "scenario_grid.json", _json_safe(
            [dict(zip(header, row)) for row in rows]))
    notes = {r.key: list(r.notes) for r in table.rows if r.notes}
    write_json(outdir / "summary.json", _json_safe({
        "cases": len(table.rows),
        "unstable_cases": [r.key for r in table.rows if not r.stable],
        "adjustment_notes": notes}))
    return 0


def cmd_proportional(params, opts, outdir, fmt):
    ratio = opts.get("ratio")
    if ratio not in RATIO_NAMES:
        raise ConfigError(f"proportional needs ratio in {RATIO_NAMES}, "
                          f"got {ratio!r}")
    values = opts.get("values")
    table = proportional_sweep(params, ratio, values=values)
    header = ["requested", "realized", "theta_star", "Z", "error"]
    rows = [[r.requested, r.realized, r.theta_star, r.Z, r.error]
            for r in table.rows]
    write_csv(outdir / f"sweep_{ratio}.csv", header, rows)
    if fmt == "json":
        write_json(outdir / f"sweep_{ratio}.json", _json_safe(
            [dict(zip(header, row)) for row in rows]))
    return 0


def cmd_simulate(params, opts, outdir, fmt):
    cfg = SimConfig(
        horizon=float(opts.get("horizon", 1e6)),
        warmup=float(opts.get("warmup", 1e4)),
        replications=int(opts.get("replications", 10)),
        seed=int(opts.get("seed", 0)),
        mode=opts.get("mode", "nested"),
        collect_event_log=bool(opts.get("event_log", False)))
    res = simulate(params, cfg)
    doc = {name: {"mean": est.mean, "half": est.half}
           for name, est in res.metrics.items()}
    write_json(outdir / "sim_result.json", _json_safe(
        {"metrics": doc, "counts": res.counts}))
    header = ["metric", "mean", "ci_half_width"]
    rows = [[name, est.mean, est.half] for name, est in res.metrics.items()]
    write_csv(outdir / "sim_metrics.csv", header, rows)
    if res.event_log is not None:
        write_csv(outdir / "event_log.csv",
                  ["replication", "time", "event", "N_u", "N_n"],
                  [[int(r[0]), r[1], EVENT_CODES[int(r[2])], int(r[3]),
                    int(r[4])] for r in res.event_log])
    return 0


def cmd_validate(params, opts, outdir, fmt):
    dist = solve_params(params)
    err = validate_mmc(dist, params)
    print(f"expected relative error vs exact M/M/c marginals: {err:.6e}")
    write_json(outdir / "validation.json", _json_safe({
        "expected_relative_error": err,
        "levels": dist.h + 1,
        "rho_u": dist.rho_u}))
    max_err = opts.get("max_error")
    if max_err is not None and err > float(max_err):
        print(f"validation error {err:.3e} exceeds limit {max_err}",
              file=sys.stderr)
        return 1
    return 0


_HANDLERS = {
    "solve": cmd_solve,
    "optimize": cmd_optimize,
    "capacity": cmd_capacity,
    "compare-fixed": cmd_compare_fixed,
    "tornado": cmd_tornado,
    "scenarios": cmd_scenarios,
    "proportional": cmd_proportional,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="edthreshold",
        description="Exact analysis and policy studies for a two-class "
                    "priority ED queue with threshold-based redirection")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--config", help="JSON config file (a manifest works)")
        p.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="override a scenario field (repeatable)")
        p.add_argument("--output-dir", default=None)
        p.add_argument("--format", choices=_FORMATS, default=None)

    p = sub.add_parser("solve", help="steady-state metrics at the scenario's theta")
    common(p)
    p.add_argument("--mode", choices=("nested", "fixed"), default=None)
    p.add_argument("--dump-blocks", action="store_true")

    p = sub.add_parser("optimize", help="enumerate thresholds, report the optimum")
    common(p)
    p.add_argument("--mode", choices=("nested", "fixed"), default=None)

    p = sub.add_parser("capacity", help="enumerate bed splits of the total capacity")
    common(p)
    p.add_argument("--mode", choices=("nested", "fixed", "both"), default=None,
                   help="'both' emits the merged nested-vs-fixed split table")
    p.add_argument("--c-total", type=int, default=None)

    p = sub.add_parser("compare-fixed", help="nested vs fixed objective per theta")
    common(p)
    p.add_argument("--theta", dest="theta_grid", default=None,
                   help="grid like 0..24 or 0,5,10 (default: all)")

    p = sub.add_parser("tornado", help="ratio sensitivity at the optimal threshold")
    common(p)
    p.add_argument("--variation", type=float, default=None)
    p.add_argument("--theta", type=int, default=None)

    p = sub.add_parser("scenarios", help="+/-20%% case grid with tornado per case")
    common(p)
    p.add_argument("--variation", type=float, default=None)

    p = sub.add_parser("proportional", help="re-optimizing sweep over one ratio")
    common(p)
    p.add_argument("--ratio", choices=RATIO_NAMES, default=None)
    p.add_argument("--values", default=None,
                   help="comma-separated ratio values (default: built-in range)")

    p = sub.add_parser("simulate", help="discrete-event simulation with CIs")
    common(p)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--warmup", type=float, default=None)
    p.add_argument("--replications", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=("nested", "fixed"), default=None)
    p.add_argument("--event-log", action="store_true", default=None)

    p = sub.add_parser("validate", help="compare urgent marginals to exact M/M/c")
    common(p)
    p.add_argument("--max-error", type=float, default=None)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command
    try:
        cfg = load_config(args.config) if args.config else {}
        if "command" in cfg and cfg["command"] != command:
            raise ConfigError(
                f"config was produced by command {cfg['command']!r}, "
                f"not {command!r}")
        cli_overrides = dict(_parse_override(t) for t in args.override)
        params = resolve_scenario(cfg, cli_preset=args.preset,
                                  cli_overrides=cli_overrides)

        options = dict(cfg.get("options") or {})
        unknown = set(options) - _OPTION_KEYS[command]
        if unknown:
            raise ConfigError(f"unknown options for {command}: {sorted(unknown)}")
        for name in _OPTION_KEYS[command]:
            value = getattr(args, name, None)
            if value is not None:
                options[name] = value
        if command == "proportional" and isinstance(options.get("values"), str):
            options["values"] = [float(v) for v in options["values"].split(",")]

        outdir = Path(args.output_dir or cfg.get("output_dir")
                      or os.environ.get("EDTHRESHOLD_OUTPUT_DIR")
                      or "edthreshold-out")
        fmt = args.format or cfg.get("format") or "csv"
        if fmt not in _FORMATS:
            raise ConfigError(f"format must be one of {_FORMATS}, got {fmt!r}")

        if command in ("solve", "optimize", "capacity", "compare-fixed",
                       "tornado", "scenarios", "proportional", "validate"):
            verdict = check_stability(params, mode="nested")
            if not verdict.stable:
                print(f"scenario rejected: {verdict}", file=sys.stderr)
                return 2

        outdir.mkdir(parents=True, exist_ok=True)
        rc = _HANDLERS[command](params, options, outdir, fmt)
        _manifest(outdir, command, params, options, fmt)
        return rc
    except (ConfigError, ParamError, SensitivityError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    except UnstableModelError as exc:
        print(f"scenario rejected: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return 2
    except (SolverError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
