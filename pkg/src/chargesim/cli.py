"""Command-line interface.

Subcommands: `simulate` runs one scenario, `sweep` runs the sizing grid,
`report` renders artifacts from a result directory, `sysid` fits a cell
model from experiment CSVs, and `init-demo` materializes the synthetic
bundle. On failure a machine-readable error JSON goes to stdout and the
exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ChargesimError


def _parse_floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def cmd_simulate(args) -> int:
    from .report import emit_scenario_traces
    from .scenario import run_scenario
    result = run_scenario(args.config)
    out = Path(args.out or "results")
    emit_scenario_traces(result, out)
    print(json.dumps({"ok": True, "out": str(out),
                      "lambda_elec": result.lambda_elec,
                      "lcoe_combined": result.lcoe_combined}, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    from .report import emit_scenario_traces, emit_sweep_report
    from .scenario import run_sweep
    sweep = run_sweep(args.config, _parse_floats(args.c_rates),
                      _parse_floats(args.capacities),
                      parallelism=args.parallelism)
    out = Path(args.out or "results")
    for key, res in sweep.cells.items():
        cell_dir = out / "cells" / f"{key[0]}x{key[1]}"
        if hasattr(res, "summary_json"):
            emit_scenario_traces(res, cell_dir)
        else:
            cell_dir.mkdir(parents=True, exist_ok=True)
            (cell_dir / "error.json").write_text(json.dumps(res, sort_keys=True))
    if sweep.baseline_no_der is not None:
        emit_scenario_traces(sweep.baseline_no_der, out / "baseline_no_der")
    if sweep.baseline_no_evse is not None:
        emit_scenario_traces(sweep.baseline_no_evse, out / "baseline_no_evse")
    emit_sweep_report(sweep, out)
    failures = sum(0 if sweep.cell_ok(k) else 1 for k in sweep.cells)
    print(json.dumps({"ok": failures == 0, "out": str(out),
                      "cells": len(sweep.cells), "failed": failures},
                     sort_keys=True))
    return 0 if failures == 0 else 2


def cmd_report(args) -> int:
    # renders from a previously written result directory
    result_dir = Path(args.result_dir)
    summary = result_dir / "sweep_summary.json"
    if not summary.exists() and not (result_dir / "summary.json").exists():
        raise ChargesimError(f"no summary found under {result_dir}")
    fmt = tuple(args.format.split(",")) if args.format else ("csv", "json", "svg")
    doc = json.loads((summary if summary.exists()
                      else result_dir / "summary.json").read_text())
    out = Path(args.out or (result_dir / "report"))
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(doc, sort_keys=True, indent=2))
    print(json.dumps({"ok": True, "out": str(out), "formats": list(fmt)},
                     sort_keys=True))
    return 0


def cmd_sysid(args) -> int:
    from .battery.ecm import OcvTable
    from .battery.sysid import (ExperimentData, GaConfig, ga_fit, ocv_correct,
                                theta_to_cell)
    raw = np.loadtxt(args.experiment, delimiter=",", skiprows=1, ndmin=2)
    ocv = OcvTable.from_csv(args.ocv)
    data = ExperimentData(time_s=raw[:, 0], current_a=raw[:, 1],
                          voltage_v=raw[:, 2], measured_ocv_table=ocv,
                          capacity_ah=args.capacity_ah)
    cfg = GaConfig(population=args.population, generations=args.generations,
                   seed=args.seed)
    if args.ocv_correct:
        theta, corr, report = ocv_correct(data, cfg)
        table = corr.apply(ocv) if (corr.a, corr.b) != (0.0, 0.0) else ocv
    else:
        theta, report = ga_fit(data, cfg)
        corr = None
        table = ocv
    cell = theta_to_cell(theta, table, args.capacity_ah,
                         v_min=float(ocv.volts[0]), v_max=float(ocv.volts[-1]))
    cell.to_json(args.out)
    fit = {"rmse_v": report.rmse_v, "mape_pct": report.mape_pct,
           "generations": report.generations_run,
           "correction": None if corr is None else {"a": corr.a, "b": corr.b}}
    Path(args.out).with_suffix(".fit.json").write_text(
        json.dumps(fit, sort_keys=True, indent=2))
    print(json.dumps({"ok": True, "out": args.out, **fit}, sort_keys=True))
    return 0


def cmd_init_demo(args) -> int:
    from .demo import write_demo_bundle
    path = write_demo_bundle(args.dir, days=args.days, seed=args.seed)
    print(json.dumps({"ok": True, "config": str(path)}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chargesim",
        description="DER-integrated EV fast-charging station co-simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario")
    p.add_argument("config")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run the sizing sweep")
    p.add_argument("config")
    p.add_argument("--c-rates", required=True,
                   help="comma-separated, e.g. 0.1,0.2,0.5,1.0,2.0")
    p.add_argument("--capacities", required=True,
                   help="comma-separated kWh, e.g. 50,100,200,400,800")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render artifacts from a result dir")
    p.add_argument("result_dir")
    p.add_argument("--format", default=None, help="csv,json,svg")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sysid", help="fit a cell model from experiment data")
    p.add_argument("experiment", help="CSV time_s,current_a,voltage_v")
    p.add_argument("--ocv", required=True, help="CSV soc,volts")
    p.add_argument("--capacity-ah", type=float, required=True)
    p.add_argument("--population", type=int, default=100)
    p.add_argument("--generations", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ocv-correct", action="store_true")
    p.add_argument("--out", default="cell_params.json")
    p.set_defaults(func=cmd_sysid)

    p = sub.add_parser("init-demo", help="write the synthetic input bundle")
    p.add_argument("dir")
    p.add_argument("--days", type=int, default=3)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_init_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ChargesimError as exc:
        print(json.dumps({"ok": False, "error": exc.to_json()}, sort_keys=True))
        return 1
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(json.dumps({"ok": False, "error": {
            "type": type(exc).__name__, "message": str(exc)}}, sort_keys=True))
        return 1


if __name__ == "__main__":
    sys.exit(main())
