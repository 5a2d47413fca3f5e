"""Electricity billing under a TOU + subscription-block + overage tariff,
and the lifetime-normalized cost of the battery/solar system.

The bill has three parts: energy at time-of-use prices (net-metered export
earns the same rate, so negative draws credit), a monthly subscription of
gamma_b blocks of block_kw each, and an overage fee per kW by which the worst
15-minute average draw exceeds the subscribed power. Overage is billed on the
single monthly maximum exceedance by default; per-window billing is available
behind `overage_billing="per_window"`.

Battery LCOE follows the five-step recipe: extrapolate life from the fade
observed over the simulation, project lifetime throughput from the average
daily energy, charge aging at the capital rate (which telescopes back to the
capital cost exactly), and normalize.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .timeseries import TimeSeries

DEMAND_WINDOW_S = 900.0
EOL_FRACTION = 0.2
DEFAULT_CAPITAL_PER_KWH = 345.0
DEFAULT_SOLAR_LCOE = 0.067
CALENDAR_LIFE_CEILING_DAYS = 15 * 365.0


@dataclass
class TariffSchedule:
    tou_prices: TimeSeries               # $/kWh on any uniform grid
    block_price: float                   # $/block/month
    block_kw: float                      # kW per block
    overage_price: float                 # $/kW
    overage_billing: str = "monthly_max"  # or "per_window"
    note: str = ""

    def __post_init__(self):
        if min(self.block_price, self.block_kw, self.overage_price) < 0:
            raise DataError("tariff prices must be non-negative")
        if np.any(self.tou_prices.values < 0):
            raise DataError("TOU prices must be non-negative")
        if self.overage_billing not in ("monthly_max", "per_window"):
            raise DataError("overage_billing must be monthly_max or per_window")

    def prices_for(self, start_s: float, n_steps: int, step_s: float) -> np.ndarray:
        """TOU price at each interval, tiling the schedule if it is shorter."""
        series = self.tou_prices.resample(step_s)
        offset = round((start_s - series.start_s) / step_s)
        idx = (offset + np.arange(n_steps)) % len(series.values)
        return series.values[idx]

    @classmethod
    def from_json(cls, path) -> "TariffSchedule":
        doc = json.loads(Path(path).read_text())
        prices = np.asarray(doc["tou_prices"], dtype=float)
        step = float(doc.get("tou_step_s", 3600.0))
        start = float(doc.get("tou_start_s", 0.0))
        return cls(
            tou_prices=TimeSeries(start, step, prices, "$/kWh"),
            block_price=float(doc.get("block_price", 0.0)),
            block_kw=float(doc.get("block_kw", 50.0)),
            overage_price=float(doc.get("overage_price", 0.0)),
            overage_billing=doc.get("overage_billing", "monthly_max"),
            note=doc.get("note", ""),
        )


@dataclass
class CostBreakdown:
    lambda_tou: float
    lambda_over: float
    lambda_sub: float
    gamma_b: int

    @property
    def lambda_elec(self) -> float:
        return self.lambda_tou + self.lambda_over + self.lambda_sub

    def to_dict(self) -> dict:
        return {"lambda_tou": self.lambda_tou, "lambda_over": self.lambda_over,
                "lambda_sub": self.lambda_sub, "lambda_elec": self.lambda_elec,
                "gamma_b": self.gamma_b}


@dataclass
class LcoeReport:
    q_lost: float
    n_sim: float                 # days
    l_exp: float                 # days
    e_daily: float               # kWh
    e_exp: float                 # kWh
    lambda_capital: float
    lambda_aging: float
    lcoe_battery: float
    lcoe_solar: float
    lcoe_combined: float | None = None
    uncalibrated_aging: bool = False
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "q_lost", "n_sim", "l_exp", "e_daily", "e_exp", "lambda_capital",
            "lambda_aging", "lcoe_battery", "lcoe_solar", "lcoe_combined",
            "uncalibrated_aging", "notes")}


def electricity_cost(grid_kw: TimeSeries, tariff: TariffSchedule,
                     gamma_b: int) -> CostBreakdown:
    """Bill a net grid draw trace (consumption-positive, kW).

    The trace is averaged onto the 15-minute demand window if finer; energy
    is billed at the TOU rate including negative (export) intervals.
    """
    if gamma_b < 0:
        raise DataError("gamma_b must be non-negative")
    if grid_kw.step_s > DEMAND_WINDOW_S + 1e-9:
        raise DataError("grid trace must be at or finer than the 15-min window")
    trace = grid_kw.resample(DEMAND_WINDOW_S)
    prices = tariff.prices_for(trace.start_s, len(trace), DEMAND_WINDOW_S)
    dt_h = DEMAND_WINDOW_S / 3600.0
    lam_tou = float(np.sum(prices * trace.values * dt_h))
    exceed = trace.values - gamma_b * tariff.block_kw
    if tariff.overage_billing == "monthly_max":
        lam_over = tariff.overage_price * max(0.0, float(np.max(exceed)))
    else:
        lam_over = tariff.overage_price * float(np.sum(np.maximum(exceed, 0.0)))
    lam_sub = gamma_b * tariff.block_price
    return CostBreakdown(lambda_tou=lam_tou, lambda_over=lam_over,
                         lambda_sub=lam_sub, gamma_b=gamma_b)


def choose_blocks(grid_kw: TimeSeries, tariff: TariffSchedule) -> int:
    """Block count minimizing subscription + overage, ties toward fewer."""
    if len(grid_kw) == 0:
        raise DataError("empty grid trace")
    trace = grid_kw.resample(DEMAND_WINDOW_S)
    peak = max(0.0, float(np.max(trace.values)))
    best_g, best_cost = 0, math.inf
    for g in range(0, int(math.ceil(peak / tariff.block_kw)) + 2):
        exceed = trace.values - g * tariff.block_kw
        if tariff.overage_billing == "monthly_max":
            over = tariff.overage_price * max(0.0, float(np.max(exceed)))
        else:
            over = tariff.overage_price * float(np.sum(np.maximum(exceed, 0.0)))
        cost = g * tariff.block_price + over
        if cost < best_cost - 1e-12:
            best_g, best_cost = g, cost
    return best_g


def battery_lcoe(q_lost: float, n_sim: float, e_daily: float,
                 capital_per_kwh: float = DEFAULT_CAPITAL_PER_KWH,
                 capacity_kwh: float = 1.0,
                 solar_lcoe: float = DEFAULT_SOLAR_LCOE,
                 uncalibrated_aging: bool = False) -> LcoeReport:
    """Levelized battery cost from simulated fade and daily throughput.

    Expected life scales the simulated days by how much of the 20% usable
    fade budget was consumed. Aging cost at the capital rate telescopes to
    the capital cost itself, so the levelized figure is exactly
    2 * capital / lifetime throughput.
    """
    if e_daily <= 0:
        raise DataError("daily energy throughput must be positive")
    if n_sim <= 0:
        raise DataError("simulated days must be positive")
    notes = []
    if q_lost < 0:
        raise DataError("capacity loss cannot be negative")
    if q_lost == 0.0:
        l_exp = CALENDAR_LIFE_CEILING_DAYS
        notes.append("no measurable aging; LCOE lower bound at the "
                     "calendar-life ceiling")
    else:
        l_exp = EOL_FRACTION * n_sim / q_lost
    e_exp = e_daily * l_exp
    lam_capital = capital_per_kwh * capacity_kwh
    # lambda_capital * (q_lost/0.2) * (l_exp/n_sim) telescopes to lambda_capital
    lam_aging = lam_capital
    lcoe_b = (lam_aging + lam_capital) / e_exp
    return LcoeReport(q_lost=q_lost, n_sim=n_sim, l_exp=l_exp,
                      e_daily=e_daily, e_exp=e_exp,
                      lambda_capital=lam_capital, lambda_aging=lam_aging,
                      lcoe_battery=lcoe_b, lcoe_solar=solar_lcoe,
                      uncalibrated_aging=uncalibrated_aging, notes=notes)


def combined_lcoe(cost: CostBreakdown, battery: LcoeReport | None,
                  solar_lcoe: float, energy_served_kwh: float,
                  battery_energy_kwh: float = 0.0,
                  solar_generated_kwh: float = 0.0) -> float:
    """Blend grid, battery, and solar costs per kWh of EV energy served.

    Each energy pathway is charged at its levelized rate; the grid bill
    already nets export credits, so the result can go negative when
    net-metering revenue dominates.
    """
    if energy_served_kwh <= 0:
        raise DataError("energy served must be positive")
    total = cost.lambda_elec
    if battery is not None and battery_energy_kwh > 0:
        total += battery.lcoe_battery * battery_energy_kwh
    if solar_generated_kwh > 0:
        total += solar_lcoe * solar_generated_kwh
    return total / energy_served_kwh
