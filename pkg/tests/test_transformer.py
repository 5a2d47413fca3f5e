"""Thermal fixed points, Euler order, and insulation aging factors."""

import math

import numpy as np
import pytest

from chargesim.errors import DataError
from chargesim.transformer import (
    LifeSummary,
    TransformerParams,
    TransformerState,
    aging_acceleration,
    equivalent_life,
    initial_transformer_state,
    steady_state,
    thermal_step,
)

AMBIENT = 25.0


def run_to_convergence(p, k, ambient=AMBIENT, dt=60.0, hours=60.0):
    s = initial_transformer_state(ambient)
    for _ in range(int(hours * 3600 / dt)):
        s = thermal_step(p, s, k * p.rated_kva, ambient, dt)
    return s


@pytest.mark.parametrize("k", [0.0, 0.5, 1.0])
def test_fixed_points_match_closed_form(k):
    p = TransformerParams()
    s = run_to_convergence(p, k)
    theta_o_ref, theta_h_ref = steady_state(p, k, AMBIENT)
    assert s.theta_o == pytest.approx(theta_o_ref, abs=0.1)
    assert s.theta_h == pytest.approx(theta_h_ref, abs=0.1)


def test_rated_load_hotspot_rise_exact():
    p = TransformerParams()
    s = run_to_convergence(p, 1.0)
    # at K=1 the hot-spot fixed point sits exactly d_theta_hr above its reference
    assert s.theta_h - s.theta_o == pytest.approx(p.d_theta_hr, abs=0.05)


def test_no_load_oil_rise_closed_form():
    p = TransformerParams()
    s = run_to_convergence(p, 0.0)
    rise = p.d_theta_or * (1.0 / (p.loss_ratio_r + 1.0)) ** p.exp_n
    assert s.theta_o - AMBIENT == pytest.approx(rise, abs=0.1)


def test_step_response_monotone_and_bounded():
    p = TransformerParams()
    s = initial_transformer_state(AMBIENT)
    theta_o_ref, _ = steady_state(p, 1.0, AMBIENT)
    prev = s.theta_o
    for _ in range(3000):
        s = thermal_step(p, s, p.rated_kva, AMBIENT, 60.0)
        assert s.theta_o >= prev - 1e-12
        assert s.theta_o <= theta_o_ref + 0.5
        prev = s.theta_o


def test_euler_first_order_convergence():
    """Halving dt roughly halves the error against a fine reference."""
    p = TransformerParams()

    def trace_end(dt, t_end=4 * 3600.0):
        s = initial_transformer_state(AMBIENT)
        for _ in range(int(t_end / dt)):
            s = thermal_step(p, s, 1.2 * p.rated_kva, AMBIENT, dt)
        return s.theta_o, s.theta_h

    ref = trace_end(0.5)
    coarse = trace_end(120.0)
    fine = trace_end(60.0)
    err_coarse = abs(coarse[1] - ref[1])
    err_fine = abs(fine[1] - ref[1])
    assert err_coarse / err_fine == pytest.approx(2.0, rel=0.35)
    # the 60 s plant step stays well within operational accuracy
    assert abs(fine[0] - ref[0]) < 0.5


def test_comparative_monotonicity_in_load():
    p = TransformerParams()
    s_low = initial_transformer_state(AMBIENT)
    s_high = initial_transformer_state(AMBIENT)
    for k in range(2000):
        load = 40.0 + 20.0 * math.sin(k / 50.0)
        s_low = thermal_step(p, s_low, load, AMBIENT, 60.0)
        s_high = thermal_step(p, s_high, load + 15.0, AMBIENT, 60.0)
        assert s_high.theta_h >= s_low.theta_h - 1e-9


def test_dt_guard():
    p = TransformerParams(tau_h=600.0)
    s = initial_transformer_state(AMBIENT)
    with pytest.raises(DataError):
        thermal_step(p, s, 10.0, AMBIENT, 200.0)


def test_ambient_reference_variant():
    p = TransformerParams(hotspot_reference="ambient", d_theta_hr=80.0)
    s = run_to_convergence(p, 1.0)
    assert s.theta_h - AMBIENT == pytest.approx(80.0, abs=0.1)


def test_faa_reference_exact():
    assert aging_acceleration(110.0) == 1.0


def test_faa_120_hand_value():
    expected = math.exp(15000.0 / 383.0 - 15000.0 / 393.0)
    assert aging_acceleration(120.0) == pytest.approx(expected, rel=1e-12)
    assert aging_acceleration(120.0) == pytest.approx(2.71, abs=0.01)


def test_faa_80_small():
    assert aging_acceleration(80.0) < 0.1


def test_equivalent_life_unity():
    trace = np.full(100, 110.0)
    life = equivalent_life(trace, 60.0)
    assert life.equivalent_aging_s == pytest.approx(100 * 60.0, rel=1e-12)
    assert life.life_consumed_pct == pytest.approx(
        100 * 60.0 / 3600.0 / 180000.0 * 100.0)


def test_equivalent_life_preserved_when_cool():
    trace = np.full(1000, 80.0)
    life = equivalent_life(trace, 60.0)
    assert life.equivalent_aging_s < 0.1 * life.wall_s
    assert life.expected_life_days > 180000.0 / 24.0  # beyond normal life


def test_equivalent_life_monotone_in_temperature():
    cool = equivalent_life(np.full(500, 70.0), 60.0)
    hot = equivalent_life(np.full(500, 130.0), 60.0)
    assert hot.equivalent_aging_s > cool.equivalent_aging_s
    assert hot.expected_life_days < cool.expected_life_days


def test_overloaded_trace_strictly_worse():
    rng = np.random.default_rng(3)
    base = 60.0 + 10.0 * rng.random(400)
    light = equivalent_life(base, 60.0)
    heavy = equivalent_life(base + 50.0, 60.0)
    assert heavy.equivalent_aging_s > light.equivalent_aging_s


def test_empty_trace_rejected():
    with pytest.raises(DataError):
        equivalent_life(np.zeros(0), 60.0)
