"""Second-order Thevenin equivalent circuit for a cell, scaled to packs.

The cell is an open-circuit voltage source OCV(soc) in series with an
SoC-dependent ohmic resistance R0(soc) and two parallel RC branches.
Sign convention is charging-positive throughout: positive current raises
SoC and raises the terminal voltage above OCV, so

    v = OCV(soc) + i*R0(soc) + i_r1*R1 + i_r2*R2

and a discharge (i < 0) sags the terminal voltage. RC branch currents are
advanced with the exact exponential solution of the branch ODE, which is
unconditionally stable at minute-scale plant steps where R*C can reach
thousands of seconds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import BatteryBoundsError, DataError


class OcvTable:
    """Monotone SoC -> volts lookup with linear interpolation."""

    def __init__(self, soc: np.ndarray, volts: np.ndarray):
        soc = np.asarray(soc, dtype=float)
        volts = np.asarray(volts, dtype=float)
        if soc.shape != volts.shape or soc.ndim != 1 or len(soc) < 2:
            raise DataError("OCV table needs matching 1-D soc and volts arrays")
        if np.any(np.diff(soc) <= 0):
            raise DataError("OCV table soc grid must be strictly increasing")
        if np.any(np.diff(volts) <= 0):
            raise DataError("OCV table must be strictly increasing in soc")
        if soc[0] > 0.0 or soc[-1] < 1.0:
            raise DataError("OCV table must cover soc in [0, 1]")
        self.soc = soc
        self.volts = volts

    def __call__(self, soc):
        return np.interp(soc, self.soc, self.volts)

    def inverse(self, v):
        """Rest voltage -> soc (clipped to the table's range)."""
        return np.interp(v, self.volts, self.soc)

    def scaled(self, n_series: int) -> "OcvTable":
        return OcvTable(self.soc, self.volts * n_series)

    def corrected(self, a: float, b: float) -> "OcvTable":
        """Apply the additive quadratic bias correction v -> v + a*v^2 + b."""
        v = self.volts + a * self.volts**2 + b
        if np.any(np.diff(v) <= 0):
            raise DataError("correction destroys OCV monotonicity")
        return OcvTable(self.soc, v)

    @classmethod
    def from_csv(cls, path) -> "OcvTable":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("soc,volts\n")
            for s, v in zip(self.soc, self.volts):
                fh.write(f"{repr(float(s))},{repr(float(v))}\n")


@dataclass(frozen=True)
class CellParams:
    """Identified circuit parameters plus safety limits for one cell."""

    r1: float                 # ohm
    c1: float                 # farad
    r2: float                 # ohm
    c2: float                 # farad
    a_r0: float               # ohm, coefficient of e^soc
    b_r0: float               # ohm, coefficient of e^(c_r0*soc)
    c_r0: float               # dimensionless, <= 0
    ocv_table: OcvTable
    nominal_capacity_ah: float
    v_min: float
    v_max: float

    def __post_init__(self):
        if min(self.r1, self.c1, self.r2, self.c2) <= 0:
            raise DataError("RC parameters must be positive")
        if self.c_r0 > 0:
            raise DataError("c_r0 must be non-positive")
        if self.nominal_capacity_ah <= 0:
            raise DataError("capacity must be positive")
        if self.v_min >= self.v_max:
            raise DataError("v_min must be below v_max")

    @property
    def tau1(self) -> float:
        return self.r1 * self.c1

    @property
    def tau2(self) -> float:
        return self.r2 * self.c2

    def to_json(self, path, topology: "PackTopology | None" = None) -> None:
        doc = {
            "r1": self.r1, "c1": self.c1, "r2": self.r2, "c2": self.c2,
            "a_r0": self.a_r0, "b_r0": self.b_r0, "c_r0": self.c_r0,
            "nominal_capacity_ah": self.nominal_capacity_ah,
            "v_min": self.v_min, "v_max": self.v_max,
            "ocv_soc": list(self.ocv_table.soc),
            "ocv_volts": list(self.ocv_table.volts),
        }
        if topology is not None:
            doc["n_series"] = topology.n_series
            doc["m_parallel"] = topology.m_parallel
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))

    @classmethod
    def from_json(cls, path) -> "CellParams":
        doc = json.loads(Path(path).read_text())
        table = OcvTable(np.array(doc["ocv_soc"]), np.array(doc["ocv_volts"]))
        return cls(r1=doc["r1"], c1=doc["c1"], r2=doc["r2"], c2=doc["c2"],
                   a_r0=doc["a_r0"], b_r0=doc["b_r0"], c_r0=doc["c_r0"],
                   ocv_table=table,
                   nominal_capacity_ah=doc["nominal_capacity_ah"],
                   v_min=doc["v_min"], v_max=doc["v_max"])


@dataclass(frozen=True)
class PackTopology:
    n_series: int
    m_parallel: int

    def __post_init__(self):
        if self.n_series < 1 or self.m_parallel < 1:
            raise DataError("pack topology counts must be >= 1")


@dataclass(frozen=True)
class BatteryState:
    soc: float
    i_r1: float
    i_r2: float
    terminal_v: float
    capacity_ah: float
    throughput_ah: float = 0.0
    time_s: float = 0.0


def initial_state(params: CellParams, soc: float,
                  capacity_ah: float | None = None) -> BatteryState:
    """Rest state at a given SoC: branch currents zero, terminal at OCV."""
    cap = params.nominal_capacity_ah if capacity_ah is None else capacity_ah
    return BatteryState(soc=soc, i_r1=0.0, i_r2=0.0,
                        terminal_v=float(params.ocv_table(soc)),
                        capacity_ah=cap)


def r0_of_soc(params: CellParams, soc) -> float | np.ndarray:
    """Ohmic resistance law: b_r0*e^(c_r0*soc) + a_r0*e^soc.

    The decaying first term captures the resistance drop with rising SoC and
    the second the marginal rise near full charge.
    """
    soc_arr = np.asarray(soc, dtype=float)
    if np.any(soc_arr < 0.0) or np.any(soc_arr > 1.0):
        raise DataError("soc out of range [0, 1]")
    r = params.b_r0 * np.exp(params.c_r0 * soc_arr) + params.a_r0 * np.exp(soc_arr)
    return float(r) if np.isscalar(soc) or soc_arr.ndim == 0 else r


def terminal_voltage(params: CellParams, soc: float, current_a: float,
                     i_r1: float, i_r2: float) -> float:
    return float(params.ocv_table(soc)) + current_a * r0_of_soc(params, soc) \
        + i_r1 * params.r1 + i_r2 * params.r2


def cell_step(params: CellParams, state: BatteryState, current_a: float,
              dt: float) -> BatteryState:
    """Advance the cell one step under a held current (charging-positive).

    Branch currents use the exact exponential update
    i_rk <- i + (i_rk - i)*exp(-dt/(Rk*Ck)); SoC is coulomb-counted against
    the present (aged) capacity.
    """
    if dt <= 0:
        raise DataError("dt must be positive")
    if not math.isfinite(current_a):
        raise DataError("current must be finite")
    a1 = math.exp(-dt / params.tau1)
    a2 = math.exp(-dt / params.tau2)
    i_r1 = current_a + (state.i_r1 - current_a) * a1
    i_r2 = current_a + (state.i_r2 - current_a) * a2
    soc = state.soc + current_a * dt / (3600.0 * state.capacity_ah)
    soc_clipped = min(max(soc, 0.0), 1.0)
    v = terminal_voltage(params, soc_clipped, current_a, i_r1, i_r2)
    return BatteryState(
        soc=soc_clipped,
        i_r1=i_r1,
        i_r2=i_r2,
        terminal_v=v,
        capacity_ah=state.capacity_ah,
        throughput_ah=state.throughput_ah + abs(current_a) * dt / 3600.0,
        time_s=state.time_s + dt,
    )


def scale_to_pack(cell: CellParams, topo: PackTopology) -> CellParams:
    """Impedance-scale a cell model to an n-series x m-parallel pack.

    Series strings multiply resistance by n and divide capacitance by n;
    parallel strings divide resistance by m and multiply capacitance by m.
    OCV and the voltage limits scale by n, capacity by m. The identity
    topology returns an equivalent parameter set.
    """
    n, m = topo.n_series, topo.m_parallel
    k = n / m
    return CellParams(
        r1=cell.r1 * k, c1=cell.c1 / k,
        r2=cell.r2 * k, c2=cell.c2 / k,
        a_r0=cell.a_r0 * k, b_r0=cell.b_r0 * k, c_r0=cell.c_r0,
        ocv_table=cell.ocv_table.scaled(n),
        nominal_capacity_ah=cell.nominal_capacity_ah * m,
        v_min=cell.v_min * n, v_max=cell.v_max * n,
    )


def clamp_current(params: CellParams, state: BatteryState,
                  requested_a: float) -> float:
    """Limit a current request so the instantaneous terminal voltage holds.

    With branch currents and OCV frozen at the present state, the terminal
    voltage is linear in the applied current, so the bound crossing has a
    unique solution. The clamped value keeps the request's sign (or is zero)
    and never exceeds it in magnitude.
    """
    r0 = r0_of_soc(params, state.soc)
    base = float(params.ocv_table(state.soc)) + state.i_r1 * params.r1 \
        + state.i_r2 * params.r2
    v_inst = base + requested_a * r0
    if params.v_min <= v_inst <= params.v_max:
        return requested_a
    bound = params.v_max if v_inst > params.v_max else params.v_min
    solved = (bound - base) / r0
    if requested_a > 0:
        clamped = min(max(solved, 0.0), requested_a)
    else:
        clamped = max(min(solved, 0.0), requested_a)
    return clamped


def soc_limited_current(state: BatteryState, requested_a: float,
                        dt: float) -> float:
    """Shrink a request so coulomb counting lands inside soc in [0, 1]."""
    scale = 3600.0 * state.capacity_ah / dt
    if requested_a > 0:
        headroom = (1.0 - state.soc) * scale
        return min(requested_a, headroom)
    if requested_a < 0:
        floorroom = -state.soc * scale
        return max(requested_a, floorroom)
    return 0.0


@dataclass
class PackTelemetry:
    voltage_clamps: int = 0
    soc_clamps: int = 0


class BatteryPack:
    """Stateful pack-equivalent battery confined to one scenario.

    Wraps the pure step functions with the safety logic: requests are first
    clamped to the voltage envelope and SoC headroom, then stepped; if the
    end-of-step voltage still escapes (OCV and branch currents move during
    the step), the current is bisected down. Clamps are silent but counted.
    """

    def __init__(self, cell: CellParams, topology: PackTopology,
                 initial_soc: float = 0.5):
        self.cell = cell
        self.topology = topology
        self.params = scale_to_pack(cell, topology)
        self.state = initial_state(self.params, initial_soc)
        self.telemetry = PackTelemetry()

    @property
    def capacity_ah(self) -> float:
        return self.state.capacity_ah

    @property
    def nominal_capacity_ah(self) -> float:
        return self.params.nominal_capacity_ah

    def nominal_voltage(self) -> float:
        return float(self.params.ocv_table(0.5))

    def apply_current(self, requested_a: float, dt: float) -> float:
        """Step the pack, returning the current actually applied."""
        i = clamp_current(self.params, self.state, requested_a)
        if i != requested_a:
            self.telemetry.voltage_clamps += 1
        i2 = soc_limited_current(self.state, i, dt)
        if i2 != i:
            self.telemetry.soc_clamps += 1
        i = i2
        nxt = cell_step(self.params, self.state, i, dt)
        if not (self.params.v_min - 1e-9 <= nxt.terminal_v
                <= self.params.v_max + 1e-9):
            lo, hi = 0.0, i
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                trial = cell_step(self.params, self.state, mid, dt)
                if self.params.v_min - 1e-9 <= trial.terminal_v \
                        <= self.params.v_max + 1e-9:
                    lo = mid
                else:
                    hi = mid
            i = lo
            nxt = cell_step(self.params, self.state, i, dt)
            self.telemetry.voltage_clamps += 1
        self.state = nxt
        return i

    def set_capacity(self, capacity_ah: float) -> None:
        if capacity_ah > self.state.capacity_ah + 1e-12:
            raise BatteryBoundsError("capacity may never increase")
        self.state = replace(self.state, capacity_ah=capacity_ah)


def build_pack(cell: CellParams, capacity_kwh: float,
               pack_voltage_v: float = 400.0,
               initial_soc: float = 0.5) -> BatteryPack:
    """Size a pack topology for a requested energy capacity and bus voltage.

    Series count comes from the nominal cell voltage, parallel count from the
    energy target; both round to integers >= 1, so the realized kWh can differ
    slightly from the request. Downstream economics use the realized value.
    """
    v_cell = float(cell.ocv_table(0.5))
    n = max(1, round(pack_voltage_v / v_cell))
    string_kwh = n * v_cell * cell.nominal_capacity_ah / 1000.0
    m = max(1, round(capacity_kwh / string_kwh))
    return BatteryPack(cell, PackTopology(n, m), initial_soc)


def realized_kwh(pack: BatteryPack) -> float:
    return pack.nominal_capacity_ah * pack.nominal_voltage() / 1000.0
