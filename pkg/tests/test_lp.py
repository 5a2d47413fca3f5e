"""Simplex core vs the scipy oracle, plus status handling."""

import numpy as np
import pytest

from chargesim.controller.lp import LpInstance, LpStatus, SimplexSolver, solve_lp

from oracles import random_lp, scipy_lp


def _check_against_scipy(c, A, b, lb, ub, atol=1e-7):
    inst = LpInstance(c=c, A=A, b=b, lb=lb, ub=ub)
    mine = solve_lp(inst)
    ref = scipy_lp(c, A, b, lb, ub)
    if ref.status == 0:
        assert mine.status is LpStatus.OPTIMAL, mine.status
        assert mine.objective == pytest.approx(ref.fun, abs=atol)
        assert np.all(A @ mine.x <= b + 1e-7)
        assert np.all(mine.x >= lb - 1e-9)
        assert np.all(mine.x <= ub + 1e-9)
    elif ref.status == 2:
        assert mine.status is LpStatus.INFEASIBLE
    elif ref.status == 3:
        assert mine.status is LpStatus.UNBOUNDED


def test_tiny_known_optimum():
    # min -x - y st x + y <= 1, x,y in [0,1] -> -1
    inst = LpInstance(c=[-1.0, -1.0], A=[[1.0, 1.0]], b=[1.0],
                      lb=[0.0, 0.0], ub=[1.0, 1.0])
    res = solve_lp(inst)
    assert res.status is LpStatus.OPTIMAL
    assert res.objective == pytest.approx(-1.0, abs=1e-9)


def test_upper_bounds_drive_solution():
    # unconstrained rows; optimum sits on the box corner
    inst = LpInstance(c=[-2.0, 1.0], A=[[0.0, 0.0]], b=[1.0],
                      lb=[0.0, -1.0], ub=[3.0, 5.0])
    res = solve_lp(inst)
    assert res.status is LpStatus.OPTIMAL
    assert res.x == pytest.approx([3.0, -1.0])


def test_infeasible_detected():
    inst = LpInstance(c=[1.0], A=[[1.0], [-1.0]], b=[1.0, -3.0],
                      lb=[0.0], ub=[10.0])
    assert solve_lp(inst).status is LpStatus.INFEASIBLE


def test_unbounded_detected():
    inst = LpInstance(c=[-1.0], A=[[-1.0]], b=[0.0], lb=[0.0],
                      ub=[np.inf])
    assert solve_lp(inst).status is LpStatus.UNBOUNDED


def test_negative_rhs_needs_phase1():
    # x >= 2 written as -x <= -2
    inst = LpInstance(c=[1.0], A=[[-1.0]], b=[-2.0], lb=[0.0], ub=[10.0])
    res = solve_lp(inst)
    assert res.status is LpStatus.OPTIMAL
    assert res.objective == pytest.approx(2.0, abs=1e-9)


def test_equality_via_two_rows():
    # x + y = 1, min x - y  -> x=0, y=1
    inst = LpInstance(c=[1.0, -1.0], A=[[1.0, 1.0], [-1.0, -1.0]],
                      b=[1.0, -1.0], lb=[0.0, 0.0], ub=[2.0, 2.0])
    res = solve_lp(inst)
    assert res.status is LpStatus.OPTIMAL
    assert res.objective == pytest.approx(-1.0, abs=1e-9)
    assert res.x == pytest.approx([0.0, 1.0], abs=1e-9)


@pytest.mark.parametrize("seed", range(60))
def test_random_lps_match_scipy(seed):
    rng = np.random.default_rng((42, seed))
    c, A, b, lb, ub = random_lp(rng)
    _check_against_scipy(c, A, b, lb, ub)


@pytest.mark.parametrize("seed", range(20))
def test_random_infeasible_and_degenerate(seed):
    rng = np.random.default_rng((99, seed))
    c, A, b, lb, ub = random_lp(rng)
    # shove one row to likely infeasibility and duplicate another (degeneracy)
    b = b.copy()
    b[0] -= rng.uniform(3.0, 10.0)
    A = np.vstack([A, A[-1]])
    b = np.append(b, b[-1])
    _check_against_scipy(c, A, b, lb, ub)


def test_dual_resolve_after_bound_fix_matches_fresh():
    rng = np.random.default_rng(7)
    for _ in range(25):
        c, A, b, lb, ub = random_lp(rng)
        inst = LpInstance(c=c, A=A, b=b, lb=lb, ub=ub)
        solver = SimplexSolver(inst)
        if solver.solve() is not LpStatus.OPTIMAL:
            continue
        j = int(rng.integers(0, len(c)))
        new_lo = lb[j]
        solver.set_variable_bounds(j, new_lo, new_lo)  # pin at lower bound
        status = solver.resolve_dual()
        lb2, ub2 = lb.copy(), ub.copy()
        ub2[j] = new_lo
        ref = scipy_lp(c, A, b, lb2, ub2)
        if ref.status == 0:
            assert status is LpStatus.OPTIMAL
            assert solver.objective() == pytest.approx(ref.fun, abs=1e-7)
        else:
            assert status is LpStatus.INFEASIBLE


def test_lp_text_dump_roundtrip_smoke():
    inst = LpInstance(c=[-1.0, 2.0], A=[[1.0, 1.0]], b=[1.5],
                      lb=[0.0, 0.0], ub=[1.0, np.inf],
                      integer_indices=(1,))
    text = inst.to_lp_text("toy")
    assert "Minimize" in text and "Subject To" in text and "x1" in text
    assert "General" in text
