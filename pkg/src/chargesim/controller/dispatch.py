"""Tariff-aware dispatch optimization in one-shot or receding-horizon form.

Decision variables per step are the three battery-path flows (solar->battery,
grid->battery, battery->EV) plus direct solar-to-EV power. At linearized
circuit fidelity the flows are pack currents converted to power through the
previous-step pack voltage; at bucket fidelity they are powers against an
energy-tank SoC. Charging and discharging may not overlap within a step: the
binary exclusion constraints are carried in the LP relaxation as the exactly
equivalent pairwise rows i_ev + i_grid <= I_max and i_ev + i_solar <= I_max
(fixing a binary tightens a current's bounds). The relaxation is solved with
the internal simplex; complementarity repair fixes the rare fractional
pattern, and the block count is chosen by outer enumeration, which is exact
because total cost is convex in the block count.

An epsilon-weighted L1 term on the flow magnitudes breaks ties between
equal-cost optima deterministically; a much smaller preference term maximizes
on-site solar use among remaining ties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..errors import DataError, InfeasibleProblem
from .lp import LpInstance, LpStatus, SimplexSolver

EPSILON_L1 = 1e-6        # $/A (or $/kW at bucket fidelity), the tie-break
EPSILON_SEV = 1e-9       # prefer serving EVs from on-site solar among ties
BINARY_TOL = 1e-7
RESIDUAL_TOL = 1e-7
FIDELITIES = ("bucket", "linearized_circuit")
ROWS_PER_STEP = 7


@dataclass
class HorizonProblem:
    steps: int
    dt_s: float
    prices: np.ndarray          # $/kWh, length T
    ev_load_kw: np.ndarray      # length T
    solar_kw: np.ndarray        # length T
    capacity_ah: float | np.ndarray
    i_max_a: float
    soc_initial: float
    voltage_v: float | np.ndarray   # previous-step pack voltage estimate
    energy_kwh: float
    p_max_kw: float
    p_block: float = 0.0
    block_kw: float = 50.0
    p_overage: float = 0.0
    fidelity: str = "linearized_circuit"

    def __post_init__(self):
        if self.steps < 1:
            raise DataError("horizon must have at least one step")
        if self.i_max_a <= 0 or self.p_max_kw <= 0:
            raise DataError("battery current/power limits must be positive")
        if self.fidelity not in FIDELITIES:
            raise DataError(f"unknown fidelity {self.fidelity!r}")
        for name in ("prices", "ev_load_kw", "solar_kw"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (self.steps,):
                raise DataError(f"{name} must have length {self.steps}")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains non-finite entries")
            setattr(self, name, arr)
        if not (0.0 <= self.soc_initial <= 1.0):
            raise DataError("initial soc must lie in [0, 1]")

    @property
    def dt_h(self) -> float:
        return self.dt_s / 3600.0

    def capacity_array(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.capacity_ah, dtype=float),
                               (self.steps,)).copy()

    def voltage_array(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.voltage_v, dtype=float),
                               (self.steps,)).copy()

    def flow_bound(self) -> float:
        """Per-step bound on each flow variable (A or kW by fidelity)."""
        return self.i_max_a if self.fidelity == "linearized_circuit" \
            else self.p_max_kw


@dataclass
class ControlDecision:
    steps: int
    dt_s: float
    fidelity: str
    i_solar_a: np.ndarray
    i_grid_a: np.ndarray
    i_ev_a: np.ndarray
    i_net_a: np.ndarray
    p_solar_kw: np.ndarray       # solar->battery
    p_grid_kw: np.ndarray        # grid->battery
    p_ev_kw: np.ndarray          # battery->EV, <= 0
    p_net_kw: np.ndarray         # signed battery power
    s_ev_kw: np.ndarray          # solar->EV direct
    y_solar: np.ndarray
    y_grid: np.ndarray
    y_ev: np.ndarray
    soc_traj: np.ndarray         # predicted soc after each step
    grid_kw: np.ndarray          # predicted station net grid draw
    gamma_b: int
    objective: float             # lambda_elec as the controller sees it
    lambda_tou: float
    lambda_over: float
    lambda_sub: float
    max_residual: float
    lp_iterations: int = 0
    repairs: int = 0

    def window(self, t: int) -> dict:
        return {
            "i_solar_a": float(self.i_solar_a[t]),
            "i_grid_a": float(self.i_grid_a[t]),
            "i_ev_a": float(self.i_ev_a[t]),
            "p_solar_kw": float(self.p_solar_kw[t]),
            "p_grid_kw": float(self.p_grid_kw[t]),
            "p_ev_kw": float(self.p_ev_kw[t]),
            "s_ev_kw": float(self.s_ev_kw[t]),
            "soc_end": float(self.soc_traj[t]),
        }


def _layout(steps: int) -> dict:
    return {
        "i_solar": (0, steps),
        "i_grid": (steps, 2 * steps),
        "i_ev": (2 * steps, 3 * steps),
        "s_ev": (3 * steps, 4 * steps),
        "z": 4 * steps,
        "n_vars": 4 * steps + 1,
        "row_blocks": {
            "excl_grid": (0, steps),
            "excl_solar": (steps, 2 * steps),
            "ev_load": (2 * steps, 3 * steps),
            "solar_avail": (3 * steps, 4 * steps),
            "soc_upper": (4 * steps, 5 * steps),
            "soc_lower": (5 * steps, 6 * steps),
            "overage": (6 * steps, 7 * steps),
        },
        "n_rows": ROWS_PER_STEP * steps,
    }


def build_problem(hp: HorizonProblem, gamma_b: int = 0) -> LpInstance:
    """Assemble the LP for one horizon and block count.

    Variables are [i_solar | i_grid | i_ev | s_ev | z] in step-major blocks;
    rows come in seven per-step blocks (see meta["layout"]). The objective is
    the TOU + overage cost of the predicted net grid draw plus the L1
    tie-break; the subscription charge enters the constant term.
    """
    t_n = hp.steps
    dt_h = hp.dt_h
    lay = _layout(t_n)
    n = lay["n_vars"]
    m = lay["n_rows"]
    bound = hp.flow_bound()

    if hp.fidelity == "linearized_circuit":
        w = hp.voltage_array() / 1000.0     # kW per amp
        cap = hp.capacity_array()           # Ah
    else:
        w = np.ones(t_n)
        cap = np.full(t_n, hp.energy_kwh)   # kWh

    sl = {k: slice(*lay[k]) for k in ("i_solar", "i_grid", "i_ev", "s_ev")}
    zi = lay["z"]
    rows = {k: slice(*v) for k, v in lay["row_blocks"].items()}
    tt = np.arange(t_n)

    A = np.zeros((m, n))
    b = np.zeros(m)

    A[rows["excl_grid"], sl["i_ev"]] = np.eye(t_n)
    A[rows["excl_grid"], sl["i_grid"]] = np.eye(t_n)
    b[rows["excl_grid"]] = bound
    A[rows["excl_solar"], sl["i_ev"]] = np.eye(t_n)
    A[rows["excl_solar"], sl["i_solar"]] = np.eye(t_n)
    b[rows["excl_solar"]] = bound

    A[rows["ev_load"], sl["i_ev"]] = np.diag(w)
    A[rows["ev_load"], sl["s_ev"]] = np.eye(t_n)
    b[rows["ev_load"]] = hp.ev_load_kw

    A[rows["solar_avail"], sl["i_solar"]] = np.diag(w)
    A[rows["solar_avail"], sl["s_ev"]] = np.eye(t_n)
    b[rows["solar_avail"]] = hp.solar_kw

    # SoC kept in capacity units: cumulative flow*dt_h scaled by cap_ref/cap_t
    cap_ref = float(np.mean(cap))
    soc_coeff = dt_h * cap_ref / cap        # per step, length T
    lower_tri = (tt[:, None] >= tt[None, :]).astype(float)
    cum = lower_tri * soc_coeff[None, :]
    A[rows["soc_upper"], sl["i_solar"]] = cum
    A[rows["soc_upper"], sl["i_grid"]] = cum
    A[rows["soc_upper"], sl["i_ev"]] = -cum
    b[rows["soc_upper"]] = (1.0 - hp.soc_initial) * cap_ref
    A[rows["soc_lower"], sl["i_solar"]] = -cum
    A[rows["soc_lower"], sl["i_grid"]] = -cum
    A[rows["soc_lower"], sl["i_ev"]] = cum
    b[rows["soc_lower"]] = hp.soc_initial * cap_ref

    base_grid = hp.ev_load_kw - hp.solar_kw   # net draw with battery idle
    A[rows["overage"], sl["i_grid"]] = np.diag(w)
    A[rows["overage"], sl["i_solar"]] = np.diag(w)
    A[rows["overage"], sl["i_ev"]] = -np.diag(w)
    A[rows["overage"], zi] = -1.0
    b[rows["overage"]] = gamma_b * hp.block_kw - base_grid

    c = np.zeros(n)
    price_w = hp.prices * dt_h * w
    c[sl["i_grid"]] = price_w + EPSILON_L1
    c[sl["i_solar"]] = price_w + EPSILON_L1
    c[sl["i_ev"]] = -price_w + EPSILON_L1
    c[sl["s_ev"]] = -EPSILON_SEV
    c[zi] = hp.p_overage

    lb = np.zeros(n)
    ub = np.empty(n)
    ub[sl["i_solar"]] = bound
    ub[sl["i_grid"]] = bound
    ub[sl["i_ev"]] = bound
    ub[sl["s_ev"]] = np.minimum(hp.ev_load_kw, hp.solar_kw)
    ub[zi] = np.inf

    const = float(np.sum(hp.prices * dt_h * base_grid)) + gamma_b * hp.p_block
    return LpInstance(c=c, A=A, b=b, lb=lb, ub=ub, obj_const=const,
                      meta={"layout": lay, "gamma_b": gamma_b,
                            "fidelity": hp.fidelity, "w": w, "cap": cap,
                            "cap_ref": cap_ref})


def repair_complementarity(i_solar: np.ndarray, i_grid: np.ndarray,
                           i_ev: np.ndarray, prices: np.ndarray,
                           weights: np.ndarray, dt_h: float,
                           tol: float = BINARY_TOL) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Choose an integral binary pattern from a (possibly fractional) point.

    Steps where discharge overlaps a charge keep the direction whose monetary
    contribution |price * dt * weight * flow| is larger and zero the other;
    already-complementary steps pass through unchanged.
    """
    y_s = (np.asarray(i_solar) > tol).astype(int)
    y_g = (np.asarray(i_grid) > tol).astype(int)
    y_e = (np.asarray(i_ev) > tol).astype(int)
    value = np.abs(prices) * dt_h * weights
    discharge_worth = value * i_ev
    charge_worth = value * (i_grid + i_solar)
    clash = (y_e == 1) & ((y_g == 1) | (y_s == 1))
    keep_discharge = clash & (discharge_worth >= charge_worth)
    keep_charge = clash & ~keep_discharge
    y_g[keep_discharge] = 0
    y_s[keep_discharge] = 0
    y_e[keep_charge] = 0
    return y_s, y_g, y_e


def _clash_steps(x: np.ndarray, lay: dict, tol: float) -> np.ndarray:
    t_n = (lay["n_vars"] - 1) // 4
    i_s = x[slice(*lay["i_solar"])]
    i_g = x[slice(*lay["i_grid"])]
    i_e = x[slice(*lay["i_ev"])]
    scale = max(1.0, float(np.max(np.abs(x[: 3 * t_n]), initial=0.0)))
    t = tol * scale
    return np.nonzero((i_e > t) & ((i_g > t) | (i_s > t)))[0]


def _apply_pattern(solver: SimplexSolver, lay: dict, step: int,
                   y_s: int, y_g: int, y_e: int, bound: float) -> None:
    t_n = (lay["n_vars"] - 1) // 4
    for name, y in (("i_solar", y_s), ("i_grid", y_g), ("i_ev", y_e)):
        j = lay[name][0] + step
        solver.set_variable_bounds(j, 0.0, bound * y)


def _solve_for_gamma(hp: HorizonProblem, gamma_b: int) -> tuple[np.ndarray, LpInstance, int, int]:
    """Relaxation + bounded complementarity repair for one block count."""
    inst = build_problem(hp, gamma_b)
    solver = SimplexSolver(inst)
    status = solver.solve()
    if status is LpStatus.INFEASIBLE:
        raise InfeasibleProblem(
            f"dispatch LP infeasible at gamma_b={gamma_b}")
    if status is not LpStatus.OPTIMAL:
        raise InfeasibleProblem(f"dispatch LP failed: {status.value}")
    lay = inst.meta["layout"]
    bound = hp.flow_bound()
    w = inst.meta["w"]
    repairs = 0
    for _ in range(2):
        clash = _clash_steps(solver.x(), lay, BINARY_TOL)
        if len(clash) == 0:
            break
        x = solver.x()
        y_s, y_g, y_e = repair_complementarity(
            x[slice(*lay["i_solar"])], x[slice(*lay["i_grid"])],
            x[slice(*lay["i_ev"])], hp.prices, w, hp.dt_h)
        for t in clash:
            _apply_pattern(solver, lay, int(t), int(y_s[t]), int(y_g[t]),
                           int(y_e[t]), bound)
        repairs += 1
        status = solver.resolve_dual()
        if status is not LpStatus.OPTIMAL:
            raise InfeasibleProblem(
                f"repair re-solve failed: {status.value}",
                step_index=int(clash[0]))
    else:
        clash = _clash_steps(solver.x(), lay, BINARY_TOL)
        if len(clash):
            # greedy fallback: fix every step's pattern at once
            x = solver.x()
            y_s, y_g, y_e = repair_complementarity(
                x[slice(*lay["i_solar"])], x[slice(*lay["i_grid"])],
                x[slice(*lay["i_ev"])], hp.prices, w, hp.dt_h)
            for t in range(hp.steps):
                _apply_pattern(solver, lay, t, int(y_s[t]), int(y_g[t]),
                               int(y_e[t]), bound)
            repairs += 1
            status = solver.resolve_dual()
            if status is not LpStatus.OPTIMAL:
                raise InfeasibleProblem("greedy binary fixing failed")
    return solver.x(), inst, solver.iterations, repairs


def _assemble_decision(hp: HorizonProblem, x: np.ndarray, inst: LpInstance,
                       iterations: int, repairs: int) -> ControlDecision:
    lay = inst.meta["layout"]
    w = inst.meta["w"]
    cap = inst.meta["cap"]
    gamma_b = inst.meta["gamma_b"]
    dt_h = hp.dt_h
    i_s = x[slice(*lay["i_solar"])].copy()
    i_g = x[slice(*lay["i_grid"])].copy()
    i_e = x[slice(*lay["i_ev"])].copy()
    s_ev = x[slice(*lay["s_ev"])].copy()
    tiny = BINARY_TOL * max(1.0, hp.flow_bound())
    for arr in (i_s, i_g, i_e, s_ev):
        arr[np.abs(arr) < tiny] = 0.0
    net = i_s + i_g - i_e

    p_s = w * i_s
    p_g = w * i_g
    p_e = -w * i_e
    p_net = w * net
    grid_kw = hp.ev_load_kw - hp.solar_kw + w * (i_g + i_s - i_e)

    soc = hp.soc_initial + np.cumsum(net * dt_h / cap)
    lam_tou = float(np.sum(hp.prices * dt_h * grid_kw))
    exceed = grid_kw - gamma_b * hp.block_kw
    lam_over = hp.p_overage * max(0.0, float(np.max(exceed)))
    lam_sub = gamma_b * hp.p_block

    y_s = (i_s > tiny).astype(int)
    y_g = (i_g > tiny).astype(int)
    y_e = (i_e > tiny).astype(int)

    residual = _max_residual(hp, gamma_b, i_s, i_g, i_e, s_ev, soc, w)
    if hp.fidelity == "linearized_circuit":
        dec_i = (i_s, i_g, i_e)
    else:
        # bucket flows are powers; report amp-equivalents at the linearization voltage
        v = hp.voltage_array()
        dec_i = (1000.0 * i_s / v, 1000.0 * i_g / v, 1000.0 * i_e / v)
    return ControlDecision(
        steps=hp.steps, dt_s=hp.dt_s, fidelity=hp.fidelity,
        i_solar_a=dec_i[0], i_grid_a=dec_i[1], i_ev_a=dec_i[2],
        i_net_a=dec_i[0] + dec_i[1] - dec_i[2],
        p_solar_kw=p_s, p_grid_kw=p_g, p_ev_kw=p_e, p_net_kw=p_net,
        s_ev_kw=s_ev, y_solar=y_s, y_grid=y_g, y_ev=y_e,
        soc_traj=soc, grid_kw=grid_kw, gamma_b=gamma_b,
        objective=lam_tou + lam_over + lam_sub,
        lambda_tou=lam_tou, lambda_over=lam_over, lambda_sub=lam_sub,
        max_residual=residual, lp_iterations=iterations, repairs=repairs)


def _max_residual(hp: HorizonProblem, gamma_b: int, i_s, i_g, i_e, s_ev,
                  soc, w) -> float:
    bound = hp.flow_bound()
    res = [
        np.max(i_e + i_g - bound, initial=0.0),
        np.max(i_e + i_s - bound, initial=0.0),
        np.max(-np.concatenate([i_s, i_g, i_e, s_ev]), initial=0.0),
        np.max(w * i_e + s_ev - hp.ev_load_kw, initial=0.0),
        np.max(w * i_s + s_ev - hp.solar_kw, initial=0.0),
        np.max(soc - 1.0, initial=0.0),
        np.max(-soc, initial=0.0),
    ]
    y_e = i_e > BINARY_TOL * max(1.0, bound)
    y_g = i_g > BINARY_TOL * max(1.0, bound)
    y_s = i_s > BINARY_TOL * max(1.0, bound)
    if np.any(y_e & (y_g | y_s)):
        res.append(1.0)
    return float(max(res))


def solve_one_shot(hp: HorizonProblem) -> ControlDecision:
    """Whole-horizon plan with the block count chosen by enumeration.

    Ascends gamma_b from zero and stops at the first cost increase (total
    cost is convex in the block count). The returned decision satisfies the
    battery and station constraints to within RESIDUAL_TOL.
    """
    peak = max(0.0, float(np.max(hp.ev_load_kw - hp.solar_kw)))
    if hp.p_block == 0.0 and hp.p_overage == 0.0:
        gammas = [0]
    else:
        gammas = list(range(0, int(math.ceil(peak / hp.block_kw)) + 2))
    best: tuple[float, int, tuple] | None = None
    for g in gammas:
        x, inst, iters, repairs = _solve_for_gamma(hp, g)
        val = float(inst.c @ x) + inst.obj_const
        if best is None or val < best[0] - 1e-12:
            best = (val, g, (x, inst, iters, repairs))
        elif val > best[0] + 1e-12:
            break  # convex in gamma: past the minimum
    assert best is not None
    x, inst, iters, repairs = best[2]
    decision = _assemble_decision(hp, x, inst, iters, repairs)
    if decision.max_residual > RESIDUAL_TOL:
        raise InfeasibleProblem(
            f"returned decision violates constraints by {decision.max_residual}")
    return decision


class RhcController:
    """Receding-horizon wrapper: solve, apply the first interval, roll on."""

    def __init__(self, lookahead_steps: int = 96):
        self.lookahead_steps = lookahead_steps
        self._last_feedback_time: float | None = None

    def step(self, hp: HorizonProblem, feedback_soc: float,
             feedback_voltage_v: float, feedback_time_s: float) -> ControlDecision:
        """Re-solve from plant feedback and return only the first interval."""
        if self._last_feedback_time is not None \
                and feedback_time_s < self._last_feedback_time:
            raise DataError("plant feedback is staler than the last decision")
        self._last_feedback_time = feedback_time_s
        horizon = replace(
            hp,
            soc_initial=min(max(feedback_soc, 0.0), 1.0),
            voltage_v=feedback_voltage_v,
        )
        full = solve_one_shot(horizon)
        return _slice_decision(full, 0, 1)


def step_rhc(hp: HorizonProblem, feedback_soc: float, feedback_voltage_v: float,
             feedback_time_s: float = 0.0) -> ControlDecision:
    return RhcController().step(hp, feedback_soc, feedback_voltage_v,
                                feedback_time_s)


def _slice_decision(dec: ControlDecision, start: int, stop: int) -> ControlDecision:
    sl = slice(start, stop)
    return ControlDecision(
        steps=stop - start, dt_s=dec.dt_s, fidelity=dec.fidelity,
        i_solar_a=dec.i_solar_a[sl], i_grid_a=dec.i_grid_a[sl],
        i_ev_a=dec.i_ev_a[sl], i_net_a=dec.i_net_a[sl],
        p_solar_kw=dec.p_solar_kw[sl], p_grid_kw=dec.p_grid_kw[sl],
        p_ev_kw=dec.p_ev_kw[sl], p_net_kw=dec.p_net_kw[sl],
        s_ev_kw=dec.s_ev_kw[sl], y_solar=dec.y_solar[sl],
        y_grid=dec.y_grid[sl], y_ev=dec.y_ev[sl], soc_traj=dec.soc_traj[sl],
        grid_kw=dec.grid_kw[sl], gamma_b=dec.gamma_b, objective=dec.objective,
        lambda_tou=dec.lambda_tou, lambda_over=dec.lambda_over,
        lambda_sub=dec.lambda_sub, max_residual=dec.max_residual,
        lp_iterations=dec.lp_iterations, repairs=dec.repairs)
