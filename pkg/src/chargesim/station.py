"""Solar output, EVSE grid injection, and nodal load aggregation.

Solar output is irradiance times panel area times efficiency, clipped at the
array rating. The station's net grid draw composes the EV-path draw (EV load
less battery discharge less on-site solar, divided by the EVSE conversion
efficiency), battery grid-charging, and net-metered solar export; reactive
power follows the power-factor law Q = P*tan(arccos(pf)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DataError

BALANCE_TOL_KW = 1e-6


@dataclass(frozen=True)
class SolarConfig:
    rated_kw: float
    panel_area_m2: float
    efficiency: float

    def __post_init__(self):
        if min(self.rated_kw, self.panel_area_m2, self.efficiency) <= 0:
            raise DataError("solar parameters must be positive")
        if self.efficiency > 1:
            raise DataError("solar efficiency must be <= 1")


@dataclass(frozen=True)
class EvseConfig:
    capacity_kw: float
    efficiency: float
    power_factor: float
    bus_id: str

    def __post_init__(self):
        if not (0 < self.power_factor <= 1):
            raise DataError("power factor must lie in (0, 1]")
        if not (0 < self.efficiency <= 1):
            raise DataError("EVSE efficiency must lie in (0, 1]")
        if self.capacity_kw <= 0:
            raise DataError("EVSE capacity must be positive")


@dataclass(frozen=True)
class NodeInjection:
    p_kw: float     # + = consumption
    q_kvar: float
    bus_id: str

    def __post_init__(self):
        if not (math.isfinite(self.p_kw) and math.isfinite(self.q_kvar)):
            raise DataError("injection must be finite")


@dataclass(frozen=True)
class StationFlows:
    """Per-interval station power bookkeeping (all kW, consumption-positive)."""

    ev_load_kw: float
    batt_to_ev_kw: float
    solar_to_ev_kw: float
    grid_to_ev_kw: float       # after EVSE conversion division
    grid_to_batt_kw: float
    solar_to_batt_kw: float
    solar_export_kw: float
    net_grid_kw: float


def solar_output(cfg: SolarConfig, ghi_w_m2: float) -> float:
    """Array output in kW for a given global horizontal irradiance."""
    if ghi_w_m2 < 0:
        raise DataError("irradiance must be non-negative")
    return min(cfg.rated_kw, ghi_w_m2 * cfg.panel_area_m2 * cfg.efficiency / 1000.0)


def reactive_for(p_kw: float, power_factor: float) -> float:
    return p_kw * math.tan(math.acos(power_factor))


def compose_station_flows(ev_load_kw: float, solar_avail_kw: float,
                          batt_to_ev_kw: float, solar_to_ev_kw: float,
                          grid_to_batt_kw: float, solar_to_batt_kw: float,
                          evse_efficiency: float) -> StationFlows:
    """Assemble the station's internal power balance for one interval.

    Inputs must already be physically feasible (the plant clamps them);
    a residual above tolerance indicates an orchestration bug, not bad data.
    """
    if ev_load_kw < -BALANCE_TOL_KW:
        raise DataError("EV load must be non-negative")
    remaining_ev = ev_load_kw - batt_to_ev_kw - solar_to_ev_kw
    if remaining_ev < -BALANCE_TOL_KW:
        raise DataError("battery/solar deliver more than the EV load")
    remaining_ev = max(remaining_ev, 0.0)
    export = solar_avail_kw - solar_to_ev_kw - solar_to_batt_kw
    if export < -BALANCE_TOL_KW:
        raise DataError("solar dispatched above availability")
    export = max(export, 0.0)
    grid_to_ev = remaining_ev / evse_efficiency
    net = grid_to_ev + grid_to_batt_kw - export
    return StationFlows(
        ev_load_kw=ev_load_kw,
        batt_to_ev_kw=batt_to_ev_kw,
        solar_to_ev_kw=solar_to_ev_kw,
        grid_to_ev_kw=grid_to_ev,
        grid_to_batt_kw=grid_to_batt_kw,
        solar_to_batt_kw=solar_to_batt_kw,
        solar_export_kw=export,
        net_grid_kw=net,
    )


def evse_grid_injection(cfg: EvseConfig, ev_load_kw: float,
                        battery_p_kw: float, solar_p_kw: float,
                        solar_to_ev_kw: float = 0.0,
                        solar_to_batt_kw: float = 0.0) -> NodeInjection:
    """Net station injection at its bus.

    battery_p_kw is signed pack power (+ charging from the grid, - discharge
    toward the EV bus); solar_p_kw is the array output. Export shows up as a
    negative draw and carries the same power factor.
    """
    if ev_load_kw < 0:
        raise DataError("EV load must be non-negative")
    batt_to_ev = max(-battery_p_kw, 0.0)
    grid_to_batt = max(battery_p_kw, 0.0) - solar_to_batt_kw
    if grid_to_batt < -BALANCE_TOL_KW:
        raise DataError("solar-to-battery exceeds battery charge power")
    flows = compose_station_flows(
        ev_load_kw=ev_load_kw, solar_avail_kw=solar_p_kw,
        batt_to_ev_kw=batt_to_ev, solar_to_ev_kw=solar_to_ev_kw,
        grid_to_batt_kw=max(grid_to_batt, 0.0),
        solar_to_batt_kw=solar_to_batt_kw,
        evse_efficiency=cfg.efficiency)
    p = flows.net_grid_kw
    return NodeInjection(p_kw=p, q_kvar=reactive_for(p, cfg.power_factor),
                         bus_id=cfg.bus_id)


def aggregate_node_load(stations: list[NodeInjection],
                        background: list[NodeInjection],
                        known_buses: set[str] | None = None) -> dict[str, tuple[float, float]]:
    """Componentwise P, Q totals per bus."""
    totals: dict[str, tuple[float, float]] = {}
    for inj in list(stations) + list(background):
        if known_buses is not None and inj.bus_id not in known_buses:
            raise DataError(f"unknown bus id {inj.bus_id!r}")
        p, q = totals.get(inj.bus_id, (0.0, 0.0))
        totals[inj.bus_id] = (p + inj.p_kw, q + inj.q_kvar)
    return totals
