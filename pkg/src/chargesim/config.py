"""Scenario configuration: INI schema, validation, and input resolution.

A scenario file is a small INI document with [scenario], [battery], [solar],
[evse], [network], and [tariff] sections; every referenced path is resolved
relative to the config file. `load_scenario` parses and validates the
config, loads every referenced series, resamples them onto the plant clock,
and returns the bundle the orchestrator consumes.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, asdict, replace
from datetime import datetime, timezone
from pathlib import Path

from .errors import ConfigError, DataError
from .timeseries import TimeSeries, load_csv

CONTROLLER_MODES = ("one_shot", "rhc")
FIDELITIES = ("bucket", "linearized_circuit")


@dataclass
class ScenarioConfig:
    start_date: str
    horizon_days: int
    control_interval_s: int = 900
    plant_interval_s: int = 60
    battery_capacity_kwh: float = 200.0
    battery_max_c_rate: float = 0.5
    solar_rated_kw: float = 80.0
    evse_capacity_kw: float = 350.0
    transformer_rating_kva: float | None = None
    controller_mode: str = "one_shot"
    controller_fidelity: str = "linearized_circuit"
    rng_seed: int = 0

    # component settings
    cell_params_path: str = ""
    pack_voltage_v: float = 400.0
    initial_soc: float = 0.5
    aging_params_path: str = ""
    solar_panel_area_m2: float = 500.0
    solar_efficiency: float = 0.2
    evse_efficiency: float = 1.0
    evse_power_factor: float = 1.0
    load_path: str = ""
    irradiance_path: str = ""
    network_path: str = ""
    ambient_path: str = ""
    background_profile_path: str = ""
    tariff_path: str = ""
    solar_lcoe_per_kwh: float = 0.067
    battery_capital_per_kwh: float = 345.0

    def __post_init__(self):
        if self.horizon_days < 0:
            raise ConfigError("horizon_days must be >= 0")
        if self.control_interval_s <= 0 or self.plant_interval_s <= 0:
            raise ConfigError("intervals must be positive")
        if self.control_interval_s % self.plant_interval_s != 0:
            raise ConfigError(
                "control_interval must be an integer multiple of plant_interval")
        for name in ("battery_capacity_kwh", "battery_max_c_rate",
                     "solar_rated_kw", "evse_capacity_kw"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.controller_mode not in CONTROLLER_MODES:
            raise ConfigError(f"controller_mode must be one of {CONTROLLER_MODES}")
        if self.controller_fidelity not in FIDELITIES:
            raise ConfigError(f"controller_fidelity must be one of {FIDELITIES}")

    @property
    def start_epoch_s(self) -> float:
        try:
            dt = datetime.fromisoformat(self.start_date)
        except ValueError as exc:
            raise ConfigError(f"bad start_date {self.start_date!r}") from exc
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return dt.timestamp()

    @property
    def horizon_s(self) -> float:
        return self.horizon_days * 86400.0

    @property
    def n_plant_steps(self) -> int:
        return int(self.horizon_s // self.plant_interval_s)

    @property
    def n_control_steps(self) -> int:
        return int(self.horizon_s // self.control_interval_s)

    @property
    def steps_per_window(self) -> int:
        return self.control_interval_s // self.plant_interval_s

    def config_hash(self) -> str:
        doc = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(doc.encode()).hexdigest()[:16]

    def with_sizing(self, c_rate: float, capacity_kwh: float) -> "ScenarioConfig":
        return replace(self, battery_max_c_rate=c_rate,
                       battery_capacity_kwh=capacity_kwh)


def _get(section, key, cast, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"missing required key {key!r} in [{section.name}]")
        return default
    raw = section[key]
    try:
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


def parse_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"missing config file: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if "scenario" not in parser:
        raise ConfigError("config needs a [scenario] section")
    base = path.parent

    def resolve(p):
        return str((base / p).resolve()) if p else ""

    sc = parser["scenario"]
    batt = parser["battery"] if "battery" in parser else {}
    solar = parser["solar"] if "solar" in parser else {}
    evse = parser["evse"] if "evse" in parser else {}
    net = parser["network"] if "network" in parser else {}
    tariff = parser["tariff"] if "tariff" in parser else {}

    def sec_get(section, key, cast, default=None, required=False):
        if isinstance(section, dict):
            if required:
                raise ConfigError(f"missing section holding required key {key!r}")
            return default
        return _get(section, key, cast, default, required)

    cfg = ScenarioConfig(
        start_date=_get(sc, "start_date", str, required=True),
        horizon_days=_get(sc, "horizon_days", int, required=True),
        control_interval_s=_get(sc, "control_interval_s", int, 900),
        plant_interval_s=_get(sc, "plant_interval_s", int, 60),
        rng_seed=_get(sc, "rng_seed", int, required=True),
        controller_mode=_get(sc, "controller_mode", str, "one_shot"),
        controller_fidelity=_get(sc, "controller_fidelity", str,
                                 "linearized_circuit"),
        transformer_rating_kva=_get(sc, "transformer_rating_kva", float, None),
        battery_capacity_kwh=sec_get(batt, "capacity_kwh", float, 0.0),
        battery_max_c_rate=sec_get(batt, "max_c_rate", float, 0.5),
        cell_params_path=resolve(sec_get(batt, "cell_params", str, "")),
        pack_voltage_v=sec_get(batt, "pack_voltage_v", float, 400.0),
        initial_soc=sec_get(batt, "initial_soc", float, 0.5),
        aging_params_path=resolve(sec_get(batt, "aging_params", str, "")),
        solar_rated_kw=sec_get(solar, "rated_kw", float, 0.0),
        solar_panel_area_m2=sec_get(solar, "panel_area_m2", float, 500.0),
        solar_efficiency=sec_get(solar, "efficiency", float, 0.2),
        irradiance_path=resolve(sec_get(solar, "irradiance", str, "")),
        evse_capacity_kw=sec_get(evse, "capacity_kw", float, 350.0),
        evse_efficiency=sec_get(evse, "efficiency", float, 1.0),
        evse_power_factor=sec_get(evse, "power_factor", float, 1.0),
        load_path=resolve(sec_get(evse, "load", str, "", required=False)),
        network_path=resolve(sec_get(net, "file", str, "")),
        ambient_path=resolve(sec_get(net, "ambient", str, "")),
        background_profile_path=resolve(sec_get(net, "background_profile",
                                                str, "")),
        tariff_path=resolve(sec_get(tariff, "file", str, "")),
        solar_lcoe_per_kwh=sec_get(tariff, "solar_lcoe_per_kwh", float, 0.067),
        battery_capital_per_kwh=sec_get(tariff, "battery_capital_per_kwh",
                                        float, 345.0),
    )
    return cfg


@dataclass
class ScenarioInputs:
    config: ScenarioConfig
    ev_load: TimeSeries          # kW on the plant clock
    irradiance: TimeSeries       # W/m2 on the plant clock
    ambient: TimeSeries          # degC on the plant clock
    background: TimeSeries       # dimensionless multiplier on the plant clock


def _resolve_series(path: str, unit: str, cfg: ScenarioConfig,
                    what: str) -> TimeSeries:
    series = load_csv(path, expected_unit=unit)
    series = series.resample(cfg.plant_interval_s)
    if not series.covers(cfg.start_epoch_s, cfg.horizon_s):
        raise DataError(f"{what} series shorter than horizon")
    if cfg.n_plant_steps == 0:
        return TimeSeries(cfg.start_epoch_s, cfg.plant_interval_s, [], unit)
    return series.slice(cfg.start_epoch_s, cfg.n_plant_steps)


def _constant_series(cfg: ScenarioConfig, value: float, unit: str) -> TimeSeries:
    import numpy as np
    n = max(cfg.n_plant_steps, 1)
    return TimeSeries(cfg.start_epoch_s, cfg.plant_interval_s,
                      np.full(n, value), unit)


def load_scenario(config_path: str | Path) -> ScenarioInputs:
    """Parse the config and materialize every input series on the plant clock."""
    cfg = parse_config(config_path)
    ev = (_resolve_series(cfg.load_path, "kW", cfg, "EV load")
          if cfg.load_path else _constant_series(cfg, 0.0, "kW"))
    ghi = (_resolve_series(cfg.irradiance_path, "W/m2", cfg, "irradiance")
           if cfg.irradiance_path else _constant_series(cfg, 0.0, "W/m2"))
    amb = (_resolve_series(cfg.ambient_path, "degC", cfg, "ambient")
           if cfg.ambient_path else _constant_series(cfg, 23.0, "degC"))
    bg = (_resolve_series(cfg.background_profile_path, "", cfg, "background")
          if cfg.background_profile_path else _constant_series(cfg, 1.0, ""))
    return ScenarioInputs(config=cfg, ev_load=ev, irradiance=ghi,
                          ambient=amb, background=bg)
