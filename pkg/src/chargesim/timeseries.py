"""Uniform-step time series: CSV ingestion, unit tags, and resampling.

Series are stored as (start epoch seconds, step seconds, value array, unit).
Resampling to a finer step is a zero-order hold; resampling to a coarser
step averages whole blocks, which matches how demand charges are metered
on interval averages.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import DataError

KNOWN_UNITS = ("kW", "W/m2", "$/kWh", "degC")


def parse_timestamp(text: str) -> float:
    """Parse an ISO-8601 timestamp (naive = UTC) or plain epoch seconds."""
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(text)
    except ValueError as exc:
        raise DataError(f"unparseable timestamp {text!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


@dataclass
class TimeSeries:
    start_s: float
    step_s: float
    values: np.ndarray
    unit: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise DataError("time series values must be one-dimensional")
        if self.step_s <= 0:
            raise DataError("time series step must be positive")
        if not np.all(np.isfinite(self.values)):
            raise DataError("time series contains missing or non-finite values")
        if self.unit and self.unit not in KNOWN_UNITS:
            raise DataError(f"unknown unit tag {self.unit!r}; known: {KNOWN_UNITS}")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end_s(self) -> float:
        return self.start_s + self.step_s * len(self.values)

    def covers(self, start_s: float, duration_s: float) -> bool:
        return self.start_s <= start_s and self.end_s >= start_s + duration_s

    def resample(self, step_s: float) -> "TimeSeries":
        """Return a copy at a new uniform step.

        Finer steps repeat values (zero-order hold); coarser steps average
        whole blocks. The ratio must be an integer either way.
        """
        if step_s <= 0:
            raise DataError("target step must be positive")
        if math.isclose(step_s, self.step_s):
            return TimeSeries(self.start_s, self.step_s, self.values.copy(), self.unit)
        if self.step_s > step_s:
            ratio = self.step_s / step_s
            k = round(ratio)
            if not math.isclose(ratio, k):
                raise DataError(
                    f"cannot hold {self.step_s} s data onto a {step_s} s grid: "
                    "non-integer ratio")
            vals = np.repeat(self.values, k)
        else:
            ratio = step_s / self.step_s
            k = round(ratio)
            if not math.isclose(ratio, k):
                raise DataError(
                    f"cannot average {self.step_s} s data onto a {step_s} s grid: "
                    "non-integer ratio")
            n_blocks = len(self.values) // k
            if n_blocks == 0:
                raise DataError("series too short to downsample")
            vals = self.values[: n_blocks * k].reshape(n_blocks, k).mean(axis=1)
        return TimeSeries(self.start_s, step_s, vals, self.unit)

    def slice(self, start_s: float, n_steps: int) -> "TimeSeries":
        """Extract n_steps starting at start_s (must lie on this grid)."""
        offset = (start_s - self.start_s) / self.step_s
        i0 = round(offset)
        if not math.isclose(offset, i0, abs_tol=1e-6):
            raise DataError("requested window start is off this series' grid")
        if i0 < 0 or i0 + n_steps > len(self.values):
            raise DataError("requested window extends beyond the series")
        return TimeSeries(start_s, self.step_s, self.values[i0:i0 + n_steps].copy(),
                          self.unit)


def load_csv(path: str | Path, expected_unit: str | None = None) -> TimeSeries:
    """Load a `timestamp,value` CSV.

    Lines starting with `#` are comments; a `# unit: kW` comment declares the
    unit and is validated against expected_unit when both are present. A header
    row (`timestamp,value`) is skipped if present. Timestamps must be uniform.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    declared_unit = None
    times: list[float] = []
    vals: list[float] = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            first = row[0].strip()
            if first.startswith("#"):
                tag = first.lstrip("#").strip()
                if tag.lower().startswith("unit:"):
                    declared_unit = tag.split(":", 1)[1].strip()
                continue
            if first.lower() in ("timestamp", "time", "time_s"):
                continue
            if len(row) < 2:
                raise DataError(f"{path}: row {row!r} has no value column")
            times.append(parse_timestamp(row[0]))
            vals.append(float(row[1]))
    if len(times) < 2:
        raise DataError(f"{path}: need at least two samples")
    steps = np.diff(times)
    step = steps[0]
    if step <= 0 or not np.allclose(steps, step, rtol=0, atol=1e-6):
        raise DataError(f"{path}: non-uniform timestamps")
    unit = declared_unit or expected_unit or ""
    if declared_unit and expected_unit and declared_unit != expected_unit:
        raise DataError(
            f"{path}: declares unit {declared_unit!r}, expected {expected_unit!r}")
    return TimeSeries(times[0], float(step), np.array(vals), unit)


def write_csv(path: str | Path, series: TimeSeries) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        if series.unit:
            fh.write(f"# unit: {series.unit}\n")
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "value"])
        for i, v in enumerate(series.values):
            writer.writerow([f"{series.start_s + i * series.step_s:.0f}", repr(float(v))])
