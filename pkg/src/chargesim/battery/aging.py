"""Semi-empirical calendar + cycle capacity fade.

Calendar loss grows as alpha_cal(T, V) * t^0.75 with t in days, where the
temperature factor is Arrhenius and the voltage factor is linear. Cycle loss
grows as beta * sqrt(Q) with Q the cell-equivalent charge throughput in Ah.
Both laws are applied incrementally in telescoping form, so the accumulated
loss is independent of how an interval or throughput is partitioned into
steps. The beta factor may be a constant or a table over (mean discharge
voltage, depth of discharge); the cited coefficients are cell-specific, so
scale_cal/scale_cyc calibrate to a per-cycle loss target when data exists.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import DataError
from .ecm import BatteryState

GAS_CONSTANT = 8.3144598  # J/(mol K)
EOL_LOST_FRACTION = 0.2   # end of life at 80% of nameplate
EXPIRY_GUARD = 0.3        # beyond-EOL flag threshold


@dataclass(frozen=True)
class BetaTable:
    """Cycle aging factor over (mean discharge voltage, depth of discharge)."""

    v_grid: np.ndarray
    dod_grid: np.ndarray
    values: np.ndarray  # shape (len(v_grid), len(dod_grid))

    def __call__(self, v: float, dod: float) -> float:
        vg, dg = self.v_grid, self.dod_grid
        v = min(max(v, vg[0]), vg[-1])
        dod = min(max(dod, dg[0]), dg[-1])
        i = min(np.searchsorted(vg, v, side="right") - 1, len(vg) - 2)
        j = min(np.searchsorted(dg, dod, side="right") - 1, len(dg) - 2)
        i = max(i, 0)
        j = max(j, 0)
        fv = (v - vg[i]) / (vg[i + 1] - vg[i])
        fd = (dod - dg[j]) / (dg[j + 1] - dg[j])
        z = self.values
        return float(
            z[i, j] * (1 - fv) * (1 - fd) + z[i + 1, j] * fv * (1 - fd)
            + z[i, j + 1] * (1 - fv) * fd + z[i + 1, j + 1] * fv * fd)


@dataclass(frozen=True)
class ConstantBeta:
    value: float

    def __call__(self, v: float, dod: float) -> float:
        return self.value


@dataclass(frozen=True)
class AgingParams:
    e_a: float = 58001.7          # activation energy, J/mol
    gas_r: float = GAS_CONSTANT
    a1_t: float = 1.0e6           # Arrhenius pre-exponential
    a1_v: float = 7.543           # volt-law slope, 1/V
    a2_v: float = -23.75          # volt-law offset, V
    beta: BetaTable | ConstantBeta = field(default_factory=lambda: ConstantBeta(4.0e-3))
    scale_cal: float = 1.0
    scale_cyc: float = 1.0
    calibrated: bool = False

    def __post_init__(self):
        if self.e_a <= 0 or self.gas_r <= 0:
            raise DataError("activation energy and gas constant must be positive")
        if self.scale_cal <= 0 or self.scale_cyc <= 0:
            raise DataError("aging scales must be positive")

    def alpha_t(self, temp_k: float) -> float:
        return self.a1_t * math.exp(-self.e_a / (self.gas_r * temp_k))

    def alpha_v(self, v: float) -> float:
        return self.a1_v * v + self.a2_v

    def alpha_cal(self, temp_k: float, v: float) -> float:
        a = self.scale_cal * self.alpha_t(temp_k) * self.alpha_v(v)
        if a < 0:
            raise DataError(
                f"negative calendar aging rate at V={v}: coefficients rejected")
        return a

    @classmethod
    def from_json(cls, path) -> "AgingParams":
        doc = json.loads(Path(path).read_text())
        beta_doc = doc.get("beta", {"constant": 4.0e-3})
        beta: BetaTable | ConstantBeta
        if "constant" in beta_doc:
            beta = ConstantBeta(float(beta_doc["constant"]))
        else:
            beta = BetaTable(np.array(beta_doc["v_grid"], dtype=float),
                             np.array(beta_doc["dod_grid"], dtype=float),
                             np.array(beta_doc["values"], dtype=float))
        params = cls(
            e_a=doc.get("e_a", 58001.7),
            gas_r=doc.get("gas_r", GAS_CONSTANT),
            a1_t=doc.get("a1_t", 1.0e6),
            a1_v=doc.get("a1_v", 7.543),
            a2_v=doc.get("a2_v", -23.75),
            beta=beta,
            scale_cal=doc.get("scale_cal", 1.0),
            scale_cyc=doc.get("scale_cyc", 1.0),
            calibrated=bool(doc.get("calibrated", False)),
        )
        # Reject coefficient sets that would produce a negative rate anywhere
        # in the practical cell-voltage window.
        for v in (2.5, 3.0, 3.6, 4.2, 4.5):
            params.alpha_cal(296.15, v)
        return params

    def to_json(self, path) -> None:
        doc = {
            "e_a": self.e_a, "gas_r": self.gas_r, "a1_t": self.a1_t,
            "a1_v": self.a1_v, "a2_v": self.a2_v,
            "scale_cal": self.scale_cal, "scale_cyc": self.scale_cyc,
            "calibrated": self.calibrated,
        }
        if isinstance(self.beta, ConstantBeta):
            doc["beta"] = {"constant": self.beta.value}
        else:
            doc["beta"] = {"v_grid": list(self.beta.v_grid),
                           "dod_grid": list(self.beta.dod_grid),
                           "values": [list(r) for r in self.beta.values]}
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))


@dataclass
class AgingState:
    q_lost_cal: float = 0.0
    q_lost_cyc: float = 0.0
    elapsed_s: float = 0.0
    throughput_ah: float = 0.0
    v_avg_discharge: float = 3.7
    _discharge_vt: float = 0.0        # running integral of V*dt while discharging
    _discharge_t: float = 0.0
    _last_soc: float | None = None
    _extreme_soc: float | None = None
    _direction: int = 0
    dod_recent: float = 0.0

    @property
    def total_lost(self) -> float:
        return self.q_lost_cal + self.q_lost_cyc

    def observe_discharge(self, v: float, dt: float) -> None:
        self._discharge_vt += v * dt
        self._discharge_t += dt
        if self._discharge_t > 0:
            self.v_avg_discharge = self._discharge_vt / self._discharge_t

    def observe_soc(self, soc: float) -> None:
        """Track the swing between direction reversals as a recent DoD."""
        if self._last_soc is None:
            self._last_soc = soc
            self._extreme_soc = soc
            return
        step = soc - self._last_soc
        direction = 0 if step == 0 else (1 if step > 0 else -1)
        if direction != 0 and self._direction != 0 and direction != self._direction:
            swing = abs(self._last_soc - self._extreme_soc)
            if swing > 1e-6:
                self.dod_recent = swing
            self._extreme_soc = self._last_soc
        if direction != 0:
            self._direction = direction
        self._last_soc = soc


def calendar_increment(p: AgingParams, s: AgingState, v: float,
                       temp_k: float, dt: float) -> float:
    """Accumulate the t^0.75 calendar loss for one step; returns the increment."""
    if temp_k <= 0:
        raise DataError("temperature must be positive kelvin")
    if dt < 0:
        raise DataError("dt must be non-negative")
    if dt == 0:
        return 0.0
    alpha = p.alpha_cal(temp_k, v)
    t0 = s.elapsed_s / 86400.0
    t1 = (s.elapsed_s + dt) / 86400.0
    inc = alpha * (t1**0.75 - t0**0.75)
    s.q_lost_cal += inc
    s.elapsed_s += dt
    return inc


def cycle_increment(p: AgingParams, s: AgingState,
                    delta_throughput_ah: float) -> float:
    """Accumulate the sqrt(Q) cycle loss for a throughput increment."""
    if delta_throughput_ah < 0:
        raise DataError("throughput increment must be non-negative")
    if delta_throughput_ah == 0:
        return 0.0
    beta = p.beta(s.v_avg_discharge, s.dod_recent)
    q0 = s.throughput_ah
    q1 = q0 + delta_throughput_ah
    inc = p.scale_cyc * beta * (math.sqrt(q1) - math.sqrt(q0))
    s.q_lost_cyc += inc
    s.throughput_ah = q1
    return inc


def update_capacity(state: BatteryState, aging: AgingState,
                    nominal_ah: float) -> tuple[BatteryState, bool]:
    """Apply accumulated fade to the battery's capacity.

    Returns the updated state and an expiry flag that turns on once the
    combined loss passes the beyond-end-of-life guard.
    """
    expired = aging.total_lost > EXPIRY_GUARD
    capacity = nominal_ah * (1.0 - aging.total_lost)
    capacity = min(capacity, state.capacity_ah)
    return replace(state, capacity_ah=capacity), expired


def calibrate_cycle_scale(p: AgingParams, per_cycle_loss_target: float,
                          capacity_ah: float, n_cycles: int = 100,
                          v_ref: float = 3.7, dod_ref: float = 0.8) -> float:
    """Scale factor matching a per-cycle loss target at reference conditions.

    One full cycle moves 2*dod*capacity Ah through the cell; with the sqrt law
    the mean per-cycle loss over n_cycles is beta*sqrt(Q_total)/n_cycles.
    """
    if per_cycle_loss_target <= 0:
        raise DataError("per-cycle loss target must be positive")
    q_total = 2.0 * dod_ref * capacity_ah * n_cycles
    beta = p.beta(v_ref, dod_ref)
    unscaled = beta * math.sqrt(q_total) / n_cycles
    return per_cycle_loss_target / unscaled
