"""Render sweep and scenario outputs into tables, traces, and SVG plots.

Artifacts mirror the planning views: an LCOE matrix with the no-DER baseline
prepended, violation tables against C-rate and against capacity, a
transformer aging map over the sweep grid, load-reshaping traces, and the
controller-fidelity comparison. All emission is deterministic: CSV floats use
repr, JSON keys are sorted, and matplotlib is pinned to a fixed hash salt
with no embedded dates, so re-rendering the same results is byte-identical.
Failed sweep cells render as empty fields, never as zeros.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .scenario import ScenarioResult, SweepResult

_MPL_INITIALIZED = False


def _matplotlib():
    global _MPL_INITIALIZED
    import matplotlib
    if not _MPL_INITIALIZED:
        matplotlib.use("Agg")
        matplotlib.rcParams["svg.hashsalt"] = "chargesim"
        _MPL_INITIALIZED = True
    import matplotlib.pyplot as plt
    return plt


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def _save_svg(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})


@dataclass
class ReportBundle:
    out_dir: Path
    files: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, name: str) -> Path:
        self.files.append(name)
        return self.out_dir / name


def _write_matrix_csv(path: Path, row_label: str, rows: list[float],
                      col_labels: list[str], values: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([row_label] + col_labels)
        for r, row_vals in zip(rows, values):
            writer.writerow([_fmt(r)] + [_fmt(v) for v in row_vals])


def emit_scenario_traces(result: ScenarioResult, out_dir: str | Path) -> ReportBundle:
    """Plant/control/power-flow traces plus the summary JSON for one run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = ReportBundle(out_dir=out)

    with open(bundle.add("summary.json"), "w") as fh:
        fh.write(result.summary_json())

    cols = list(result.plant.keys())
    with open(bundle.add("traces.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for i in range(len(result.plant["time_s"])):
            writer.writerow([_fmt(result.plant[c][i]) for c in cols])

    ccols = list(result.control.keys())
    with open(bundle.add("decisions.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ccols)
        for i in range(len(result.control["time_s"])):
            writer.writerow([_fmt(result.control[c][i]) for c in ccols])

    if result.pf_magnitudes.size:
        with open(bundle.add("powerflow.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["window", "bus", "v_pu"])
            for t in range(result.pf_magnitudes.shape[0]):
                for j, bus in enumerate(result.pf_bus_ids):
                    writer.writerow([t, bus, _fmt(result.pf_magnitudes[t, j])])
    return bundle


def emit_sweep_report(sweep: SweepResult, out_dir: str | Path,
                      formats: tuple[str, ...] = ("csv", "json", "svg")) -> ReportBundle:
    """Materialize the sweep's presentation artifacts.

    LCOE matrix rows are C-rates and columns are the baseline then the
    capacity axis; the violation tables fix one axis at its smallest value;
    the aging map reports expected transformer life in days per cell.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = ReportBundle(out_dir=out)
    crates = sweep.c_rates
    caps = sweep.capacities_kwh

    def cell(c, cap):
        r = sweep.cells.get((c, cap))
        return r if isinstance(r, ScenarioResult) else None

    base_lcoe = None
    if sweep.baseline_no_der is not None:
        base = sweep.baseline_no_der
        served = base.energy.get("ev_served_kwh", 0.0)
        if served > 0:
            base_lcoe = base.lambda_elec / served

    if "csv" in formats:
        lcoe_rows = [[base_lcoe] + [
            (cell(c, cap).lcoe_combined if cell(c, cap) else None)
            for cap in caps] for c in crates]
        _write_matrix_csv(bundle.add("lcoe_matrix.csv"), "c_rate",
                          crates, ["base"] + [_fmt(c) for c in caps], lcoe_rows)

        viol = [[(cell(c, cap).violation_stats or {}).get("pct_samples")
                 if cell(c, cap) else None for cap in caps] for c in crates]
        _write_matrix_csv(bundle.add("violations_matrix.csv"), "c_rate",
                          crates, [_fmt(c) for c in caps], viol)
        # one-axis tables at the smallest value of the other axis
        _write_matrix_csv(bundle.add("violations_by_crate.csv"),
                          "capacity_kwh", [caps[0]],
                          [_fmt(c) for c in crates],
                          [[viol[i][0] for i in range(len(crates))]])
        _write_matrix_csv(bundle.add("violations_by_capacity.csv"),
                          "c_rate", [crates[0]], [_fmt(c) for c in caps],
                          [viol[0]])

        aging = [[(cell(c, cap).transformer_life or {}).get("expected_life_days")
                  if cell(c, cap) else None for cap in caps] for c in crates]
        _write_matrix_csv(bundle.add("aging_map.csv"), "c_rate", crates,
                          [_fmt(c) for c in caps], aging)

    if "json" in formats:
        doc = {
            "config_hash": sweep.base_config.config_hash(),
            "rng_seed": sweep.base_config.rng_seed,
            "c_rates": crates,
            "capacities_kwh": caps,
            "baseline_lcoe": base_lcoe,
            "cells": {
                f"{c}x{cap}": (cell(c, cap).summary_dict() if cell(c, cap)
                               else sweep.cells[(c, cap)])
                for c in crates for cap in caps},
        }
        with open(bundle.add("sweep_summary.json"), "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)

    if "svg" in formats:
        plt = _matplotlib()
        fig, ax = plt.subplots(figsize=(6, 4))
        data = np.array([[np.nan if v is None else v for v in
                          [(cell(c, cap).lcoe_combined if cell(c, cap) else None)
                           for cap in caps]] for c in crates], dtype=float)
        im = ax.imshow(data, aspect="auto", cmap="viridis")
        ax.set_xticks(range(len(caps)), [str(c) for c in caps])
        ax.set_yticks(range(len(crates)), [str(c) for c in crates])
        ax.set_xlabel("battery capacity (kWh)")
        ax.set_ylabel("max C-rate")
        ax.set_title("combined LCOE ($/kWh)")
        fig.colorbar(im, ax=ax)
        _save_svg(fig, bundle.add("lcoe_matrix.svg"))
        plt.close(fig)

        fig, ax = plt.subplots(figsize=(6, 4))
        data = np.array([[np.nan if v is None else v for v in row]
                         for row in [[(cell(c, cap).transformer_life or {})
                                      .get("expected_life_days")
                                      if cell(c, cap) else None
                                      for cap in caps] for c in crates]],
                        dtype=float)
        im = ax.imshow(data, aspect="auto", cmap="magma")
        ax.set_xticks(range(len(caps)), [str(c) for c in caps])
        ax.set_yticks(range(len(crates)), [str(c) for c in crates])
        ax.set_xlabel("battery capacity (kWh)")
        ax.set_ylabel("max C-rate")
        ax.set_title("expected transformer life (days)")
        fig.colorbar(im, ax=ax)
        _save_svg(fig, bundle.add("aging_map.svg"))
        plt.close(fig)

        first = cell(crates[0], caps[-1])
        if first is not None and len(first.plant["time_s"]):
            fig, ax = plt.subplots(figsize=(7, 3.5))
            t_h = (first.plant["time_s"] - first.plant["time_s"][0]) / 3600.0
            base_grid = first.plant["ev_kw"] - first.plant["solar_kw"]
            ax.plot(t_h, base_grid, label="initial demand")
            ax.plot(t_h, first.plant["grid_kw"], label="reshaped demand")
            ax.set_xlabel("hours")
            ax.set_ylabel("net grid power (kW)")
            ax.legend()
            _save_svg(fig, bundle.add("load_reshaping.svg"))
            plt.close(fig)

    meta = {"files": sorted(bundle.files),
            "config_hash": sweep.base_config.config_hash()}
    with open(out / "report_manifest.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
    bundle.files.append("report_manifest.json")
    bundle.metadata = meta
    return bundle


def emit_fidelity_comparison(runs: dict[str, ScenarioResult],
                             out_dir: str | Path,
                             formats: tuple[str, ...] = ("json", "svg")) -> dict:
    """Compare bucket vs linearized-circuit runs of the same scenario.

    Both runs must share every config field except controller_fidelity;
    reports per-fidelity LCOE and SoC tracking error statistics.
    """
    if set(runs) != {"bucket", "linearized_circuit"}:
        raise DataError("need exactly a bucket and a linearized_circuit run")
    cfg_a = runs["bucket"].config
    cfg_b = runs["linearized_circuit"].config
    from dataclasses import asdict
    da, db = asdict(cfg_a), asdict(cfg_b)
    da.pop("controller_fidelity")
    db.pop("controller_fidelity")
    if da != db:
        raise DataError("mismatched configs: runs differ beyond fidelity")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {}
    for name, res in sorted(runs.items()):
        doc[name] = {
            "lcoe_combined": res.lcoe_combined,
            "lambda_elec": res.lambda_elec,
            "soc_max_abs_pct": res.fidelity.max_abs_pct,
            "soc_mean_abs_pct": res.fidelity.mean_abs_pct,
        }
    if "json" in formats:
        with open(out / "fidelity_comparison.json", "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
    if "svg" in formats:
        plt = _matplotlib()
        fig, axes = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
        for ax, name in zip(axes, ("bucket", "linearized_circuit")):
            res = runs[name]
            t_h = (res.control["time_s"] - res.control["time_s"][0]) / 3600.0 \
                if len(res.control["time_s"]) else np.zeros(0)
            ax.plot(t_h, res.control["soc_true"], label="plant soc")
            ax.plot(t_h, res.control["soc_pred"], "--", label="controller soc")
            ax.set_ylabel(name)
            ax.legend(loc="upper right")
        axes[-1].set_xlabel("hours")
        _save_svg(fig, out / "fidelity_soc.svg")
        plt.close(fig)
    return doc
