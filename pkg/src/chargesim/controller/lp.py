"""Dense bounded-variable simplex for the dispatch problems.

Canonical form: minimize c^T x subject to A x <= b and lb <= x <= ub.
Slacks turn the rows into equalities; a variable is nonbasic at one of its
bounds or basic. The initial solve runs primal simplex with a phase-1
artificial objective when the slack basis is infeasible. After bound
tightenings (binary fixing during complementarity repair) the held basis
stays dual-feasible, so re-solves run dual simplex from the same tableau.

The tableau is dense (m x (n + m + 1), the last column carrying B^-1 b),
updated by rank-1 pivots. Dantzig pricing with a Bland fallback after a
degenerate stall guards against cycling.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-10
STALL_LIMIT = 80


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class LpInstance:
    """minimize c^T x  s.t.  A x <= b,  lb <= x <= ub."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer_indices: tuple[int, ...] = ()
    obj_const: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        m, n = self.A.shape
        if not (len(self.c) == n == len(self.lb) == len(self.ub)
                and len(self.b) == m):
            raise ValueError("inconsistent LP dimensions")
        if not np.all(np.isfinite(self.c)):
            raise ValueError("objective coefficients must be finite")
        if not np.all(np.isfinite(self.A)) or not np.all(np.isfinite(self.b)):
            raise ValueError("constraint coefficients must be finite")
        if np.any(self.lb > self.ub + 1e-12):
            raise ValueError("lb > ub")

    @property
    def n_vars(self) -> int:
        return self.A.shape[1]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def to_lp_text(self, name: str = "problem") -> str:
        """Dump in LP text format for external cross-checking."""
        out = [f"\\ {name}", "Minimize", " obj:"]
        terms = [f" {'+' if v >= 0 else '-'} {abs(v):.12g} x{j}"
                 for j, v in enumerate(self.c) if v != 0.0]
        out.append("".join(terms) or " 0 x0")
        out.append("Subject To")
        for i in range(self.n_rows):
            row = "".join(f" {'+' if v >= 0 else '-'} {abs(v):.12g} x{j}"
                          for j, v in enumerate(self.A[i]) if v != 0.0)
            out.append(f" r{i}:{row or ' 0 x0'} <= {self.b[i]:.12g}")
        out.append("Bounds")
        for j in range(self.n_vars):
            hi = "+inf" if np.isinf(self.ub[j]) else f"{self.ub[j]:.12g}"
            out.append(f" {self.lb[j]:.12g} <= x{j} <= {hi}")
        if self.integer_indices:
            out.append("General")
            out.append(" " + " ".join(f"x{j}" for j in self.integer_indices))
        out.append("End")
        return "\n".join(out) + "\n"


@dataclass
class LpResult:
    status: LpStatus
    x: np.ndarray
    objective: float
    iterations: int


class SimplexSolver:
    """Holds the tableau so repaired problems can be re-solved warm."""

    def __init__(self, inst: LpInstance, max_iter: int | None = None):
        self.inst = inst
        m, n = inst.A.shape
        self.m, self.n = m, n
        self.max_iter = max_iter or max(2000, 40 * (m + n))
        self.iterations = 0

        # columns: structural | slacks | rhs; artificials appended on demand
        self.N = n + m
        self.lb = np.concatenate([inst.lb, np.zeros(m)])
        self.ub = np.concatenate([inst.ub, np.full(m, np.inf)])
        self.T = np.hstack([inst.A.copy(), np.eye(m), inst.b.reshape(-1, 1)])
        self.basis = np.arange(n, n + m)
        self.at_upper = np.zeros(self.N, dtype=bool)
        # nonbasic start: every structural variable at its finite lower bound
        if not np.all(np.isfinite(inst.lb)):
            raise ValueError("structural lower bounds must be finite")
        self.in_basis = np.zeros(self.N, dtype=bool)
        self.in_basis[self.basis] = True
        self.xB = self._fresh_xB()
        self._bland = False
        self._stall = 0

    # ----- bookkeeping -------------------------------------------------

    def _nonbasic_values(self) -> np.ndarray:
        vals = np.where(self.at_upper[:self.N], self.ub, self.lb)
        vals[self.in_basis] = 0.0
        return vals

    def _fresh_xB(self) -> np.ndarray:
        vals = self._nonbasic_values()
        nz = np.nonzero(vals)[0]
        rhs = self.T[:, -1].copy()
        if len(nz):
            rhs -= self.T[:, nz] @ vals[nz]
        return rhs

    def x(self) -> np.ndarray:
        full = self._nonbasic_values()
        full[self.basis] = self.xB
        return full[:self.n]

    def objective(self) -> float:
        return float(self.inst.c @ self.x()) + self.inst.obj_const

    def _basic_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lb[self.basis], self.ub[self.basis]

    # ----- pivoting ----------------------------------------------------

    def _pivot(self, p: int, q: int) -> None:
        col_q = self.T[:, q].copy()
        piv = col_q[p]
        self.T[p, :] /= piv
        col_q[p] = 0.0
        self.T -= np.outer(col_q, self.T[p, :])
        self._d -= self._d[q] * self.T[p, :-1]
        leaving = self.basis[p]
        self.in_basis[leaving] = False
        self.in_basis[q] = True
        self.basis[p] = q

    def _reduced_costs(self, c_full: np.ndarray) -> np.ndarray:
        d = c_full.copy()
        cb = c_full[self.basis]
        nz = np.nonzero(cb)[0]
        if len(nz):
            d -= cb[nz] @ self.T[nz, :-1]
        return d

    # ----- primal simplex ----------------------------------------------

    def _primal(self, c_full: np.ndarray) -> LpStatus:
        self._d = self._reduced_costs(c_full)
        while self.iterations < self.max_iter:
            d = self._d
            fixed = self.lb >= self.ub - 1e-15
            cand_lo = (~self.in_basis) & (~self.at_upper) & (~fixed) & (d < -OPT_TOL)
            cand_hi = (~self.in_basis) & self.at_upper & (~fixed) & (d > OPT_TOL)
            score = np.zeros(self.N)
            score[cand_lo] = -d[cand_lo]
            score[cand_hi] = d[cand_hi]
            if not score.any():
                return LpStatus.OPTIMAL
            if self._bland:
                q = int(np.nonzero(score > 0)[0][0])
            else:
                q = int(np.argmax(score))
            sigma = -1.0 if self.at_upper[q] else 1.0
            col = self.T[:, q]
            lbB, ubB = self._basic_bounds()
            eff = sigma * col
            with np.errstate(divide="ignore", invalid="ignore"):
                t_lo = np.where(eff > PIVOT_TOL, (self.xB - lbB) / eff, np.inf)
                t_hi = np.where(eff < -PIVOT_TOL, (self.xB - ubB) / eff, np.inf)
            t_rows = np.minimum(t_lo, t_hi)
            t_rows = np.where(t_rows < 0, 0.0, t_rows)
            t_flip = self.ub[q] - self.lb[q]
            p = int(np.argmin(t_rows)) if self.m else -1
            t_star = t_rows[p] if self.m else np.inf
            if t_flip < t_star - 1e-15:
                # entering variable runs to its opposite bound: no basis change
                self.xB -= sigma * t_flip * col
                self.at_upper[q] = ~self.at_upper[q]
                self.iterations += 1
                continue
            if not np.isfinite(t_star):
                return LpStatus.UNBOUNDED
            # stability: among near-tied rows prefer the largest pivot element
            ties = np.nonzero(t_rows <= t_star + 1e-12)[0]
            p = int(ties[np.argmax(np.abs(col[ties]))])
            t_star = max(t_rows[p], 0.0)
            leaving = self.basis[p]
            hits_lower = eff[p] > 0
            enter_val = (self.lb[q] + t_star) if sigma > 0 else (self.ub[q] - t_star)
            self.xB = self.xB - sigma * t_star * col
            self._pivot(p, q)
            self.xB[p] = enter_val
            self.at_upper[leaving] = not hits_lower
            self.at_upper[q] = False
            self.iterations += 1
            if t_star <= 1e-13:
                self._stall += 1
                if self._stall > STALL_LIMIT:
                    self._bland = True
            else:
                self._stall = 0
            if self.iterations % 512 == 0:
                self.xB = self._fresh_xB()
        return LpStatus.ITERATION_LIMIT

    # ----- phase 1 -----------------------------------------------------

    def _add_artificials(self) -> np.ndarray:
        bad = np.nonzero(self.xB < -FEAS_TOL)[0]
        if len(bad) == 0:
            return np.array([], dtype=int)
        k = len(bad)
        cols = np.zeros((self.m, k))
        for j, row in enumerate(bad):
            cols[row, j] = -1.0
        self.T = np.hstack([self.T[:, :-1], cols, self.T[:, -1:]])
        art = np.arange(self.N, self.N + k)
        self.lb = np.concatenate([self.lb, np.zeros(k)])
        self.ub = np.concatenate([self.ub, np.full(k, np.inf)])
        self.at_upper = np.concatenate([self.at_upper, np.zeros(k, dtype=bool)])
        self.in_basis = np.concatenate([self.in_basis, np.zeros(k, dtype=bool)])
        self.N += k
        for j, row in enumerate(bad):
            # displaced slack leaves the basis at its lower bound
            old = self.basis[row]
            self.in_basis[old] = False
            self.at_upper[old] = False
            self.basis[row] = art[j]
            self.in_basis[art[j]] = True
            self.T[row, :] *= -1.0
            self.xB[row] = -self.xB[row]
        return art

    def solve(self) -> LpStatus:
        """Primal two-phase solve from the slack basis."""
        self.xB = self._fresh_xB()
        art = self._add_artificials()
        if len(art):
            c1 = np.zeros(self.N)
            c1[art] = 1.0
            status = self._primal(c1)
            if status is not LpStatus.OPTIMAL:
                return (LpStatus.INFEASIBLE
                        if status is LpStatus.UNBOUNDED else status)
            if float(c1 @ self._full_x()) > 1e-6:
                return LpStatus.INFEASIBLE
            self.ub[art] = 0.0  # pin artificials for phase 2
        c2 = np.concatenate([self.inst.c, np.zeros(self.N - self.n)])
        self._bland = False
        self._stall = 0
        return self._primal(c2)

    def _full_x(self) -> np.ndarray:
        full = self._nonbasic_values()
        full[self.basis] = self.xB
        return full

    # ----- dual simplex (warm re-solve after bound changes) -------------

    def set_variable_bounds(self, j: int, lo: float, hi: float) -> None:
        """Tighten a structural variable's range in place."""
        self.lb[j] = lo
        self.ub[j] = hi
        if not self.in_basis[j]:
            # snap the nonbasic value onto the nearest new bound
            val = self.ub[j] if self.at_upper[j] else self.lb[j]
            if not np.isfinite(val):
                self.at_upper[j] = not self.at_upper[j]
            self.xB = self._fresh_xB()

    def resolve_dual(self) -> LpStatus:
        c2 = np.concatenate([self.inst.c, np.zeros(self.N - self.n)])
        self._d = self._reduced_costs(c2)
        while self.iterations < self.max_iter:
            lbB, ubB = self._basic_bounds()
            below = lbB - self.xB
            above = self.xB - ubB
            worst_b = float(np.max(below)) if self.m else 0.0
            worst_a = float(np.max(above)) if self.m else 0.0
            if max(worst_b, worst_a) <= FEAS_TOL:
                return self._primal(c2)  # dual+primal feasible: verify optimal
            if worst_b >= worst_a:
                p = int(np.argmax(below))
                target = lbB[p]
            else:
                p = int(np.argmax(above))
                target = ubB[p]
            row = self.T[p, :-1]
            fixed = self.lb >= self.ub - 1e-15
            free = (~self.in_basis) & (~fixed)
            if self.xB[p] < target:  # below lower: need entering that raises it
                ok_lo = free & (~self.at_upper) & (row < -PIVOT_TOL)
                ok_hi = free & self.at_upper & (row > PIVOT_TOL)
            else:
                ok_lo = free & (~self.at_upper) & (row > PIVOT_TOL)
                ok_hi = free & self.at_upper & (row < -PIVOT_TOL)
            cand = np.nonzero(ok_lo | ok_hi)[0]
            if len(cand) == 0:
                return LpStatus.INFEASIBLE
            ratios = np.abs(self._d[cand] / row[cand])
            q = int(cand[np.argmin(ratios)])
            delta = (self.xB[p] - target) / row[q]
            enter_val = (self.ub[q] if self.at_upper[q] else self.lb[q]) + delta
            hits_lower = self.xB[p] < target
            self.xB = self.xB - delta * self.T[:, q]
            leaving = self.basis[p]
            self._pivot(p, q)
            self.xB[p] = enter_val
            self.at_upper[leaving] = not hits_lower
            self.at_upper[q] = False
            self.iterations += 1
            if self.iterations % 512 == 0:
                self.xB = self._fresh_xB()
        return LpStatus.ITERATION_LIMIT


def solve_lp(inst: LpInstance, max_iter: int | None = None) -> LpResult:
    solver = SimplexSolver(inst, max_iter=max_iter)
    status = solver.solve()
    x = solver.x()
    obj = solver.objective() if status is LpStatus.OPTIMAL else float("nan")
    return LpResult(status=status, x=x, objective=obj,
                    iterations=solver.iterations)
