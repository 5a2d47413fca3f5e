"""Shared synthetic identification cases (used by unit and acceptance tests).

The profile is a pulse-pair characterization sweeping SoC from 0.95 down to
~0.14 with rests, mirroring how impedance tests are actually run; without the
sweep the SoC dependence of the ohmic term is unidentifiable. Fits are cached
per (noise, seed) because a GA run costs ~45 s.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from chargesim.battery.ecm import cell_step, initial_state
from chargesim.battery.sysid import (
    ExperimentData,
    GaConfig,
    default_bounds,
    estimate_r0_bounds,
    ga_fit,
)
from chargesim.demo import default_cell

TRUTH = default_cell()
CAP_AH = TRUTH.nominal_capacity_ah

RECOVERY_GA = dict(population=128, generations=250, mutation_rate=0.35,
                   mutation_scale=0.18, mutation_decay=0.96,
                   mutation_floor=0.003)


def hppc_profile(dt: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    chunks = []
    for _ in range(9):
        chunks.append(np.zeros(60))
        for amp in (-9.7, 4.85, -4.85, 9.7):
            chunks.append(np.full(30, amp))
            chunks.append(np.zeros(90))
        chunks.append(np.full(240, -0.09 * 3600 * CAP_AH / 240.0))
        chunks.append(np.zeros(120))
    current = np.concatenate(chunks)
    return np.arange(len(current)) * dt, current


@lru_cache(maxsize=None)
def clean_trace() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    t, current = hppc_profile()
    s = initial_state(TRUTH, 0.95)
    volts = np.empty(len(t))
    volts[0] = float(TRUTH.ocv_table(0.95))
    for k in range(1, len(t)):
        s = cell_step(TRUTH, s, float(current[k]), 1.0)
        volts[k] = s.terminal_v
    return t, current, volts


def make_data(noise_frac: float = 0.0, noise_seed: int = 42,
              bias_v: float = 0.0) -> tuple[ExperimentData, np.ndarray]:
    """Experiment data with optional measurement noise and OCV-table bias.

    bias_v shifts the *measured* OCV table down (the classic pseudo-OCV
    underestimate), leaving the data generated by the true table.
    """
    t, current, v_true = clean_trace()
    rng = np.random.default_rng(noise_seed)
    sigma = noise_frac * (v_true.max() - v_true.min())
    v = v_true + (rng.normal(0.0, sigma, len(v_true)) if sigma else 0.0)
    v[0] = v_true[0]
    table = TRUTH.ocv_table
    if bias_v:
        from chargesim.battery.ecm import OcvTable
        table = OcvTable(table.soc, table.volts - bias_v)
    data = ExperimentData(time_s=t, current_a=current, voltage_v=v,
                          measured_ocv_table=table, capacity_ah=CAP_AH,
                          initial_soc_known=0.95)
    return data, v_true


def recovery_config(data: ExperimentData, seed: int = 3, **overrides) -> GaConfig:
    lo, hi = estimate_r0_bounds(data)
    opts = {**RECOVERY_GA, **overrides}
    return GaConfig(seed=seed, parameter_bounds=default_bounds(lo, hi), **opts)


@lru_cache(maxsize=None)
def fitted(noise_frac: float, seed: int = 3):
    data, v_true = make_data(noise_frac)
    theta, report = ga_fit(data, recovery_config(data, seed))
    return data, v_true, theta, report


def r0_curve(theta, soc_pts):
    return theta[5] * np.exp(theta[6] * soc_pts) + theta[4] * np.exp(soc_pts)


def true_r0(soc_pts):
    return (TRUTH.b_r0 * np.exp(TRUTH.c_r0 * soc_pts)
            + TRUTH.a_r0 * np.exp(soc_pts))
