"""Cell parameter identification from current/voltage test data.

A genetic algorithm searches the seven-gene vector
[r1, c1, r2, c2, a_r0, b_r0, c_r0] against measured voltage, with fitness
the negative RMSE of the simulated circuit scaled by alpha_fit. The ohmic
gene range is bracketed beforehand from instantaneous voltage drops at
current steps. Measured pseudo-OCV tables carry a load-induced bias, so a
three-pass scheme fits once, regresses the residual against OCV to learn an
additive quadratic correction, and refits with the corrected table.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from .ecm import CellParams, OcvTable

GENE_NAMES = ("r1", "c1", "r2", "c2", "a_r0", "b_r0", "c_r0")


@dataclass
class ExperimentData:
    time_s: np.ndarray
    current_a: np.ndarray      # charging-positive
    voltage_v: np.ndarray
    measured_ocv_table: OcvTable
    capacity_ah: float
    initial_soc_known: float | None = None   # protocol-known start, if any

    def __post_init__(self):
        self.time_s = np.asarray(self.time_s, dtype=float)
        self.current_a = np.asarray(self.current_a, dtype=float)
        self.voltage_v = np.asarray(self.voltage_v, dtype=float)
        if not (len(self.time_s) == len(self.current_a) == len(self.voltage_v)):
            raise DataError("experiment arrays must have equal lengths")
        if np.any(np.diff(self.time_s) <= 0):
            raise DataError("experiment time must be strictly increasing")
        if self.capacity_ah <= 0:
            raise DataError("capacity must be positive")

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.time_s)

    def initial_soc(self) -> float:
        """Protocol-known start when available, else invert the rest sample.

        Inversion through a biased table shifts the whole SoC trajectory and
        hides most of the bias, so bias-correction work should supply the
        protocol value.
        """
        if self.initial_soc_known is not None:
            return float(self.initial_soc_known)
        return float(self.measured_ocv_table.inverse(self.voltage_v[0]))


@dataclass
class GaConfig:
    population: int = 100
    generations: int = 200
    crossover_rate: float = 0.9
    mutation_rate: float = 0.15
    alpha_fit: float = 10.0
    parameter_bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    seed: int = 0
    mutation_scale: float = 0.1
    mutation_decay: float = 0.99
    mutation_floor: float = 0.002

    def __post_init__(self):
        if self.population < 2:
            raise DataError("population must be >= 2")
        for name, (lo, hi) in self.parameter_bounds.items():
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise DataError(f"bad bounds for gene {name}: [{lo}, {hi}]")


@dataclass(frozen=True)
class OcvCorrection:
    a: float  # 1/V
    b: float  # V

    def apply(self, table: OcvTable) -> OcvTable:
        return table.corrected(self.a, self.b)


@dataclass
class FitReport:
    rmse_v: float
    mape_pct: float
    fitness: float
    generations_run: int
    mean_signed_error_v: float


def estimate_r0_bounds(data: ExperimentData,
                       min_step_a: float | None = None) -> tuple[float, float]:
    """Bracket the ohmic resistance from instantaneous drops at current steps.

    Each detected step edge gives |dV/dI|; the bracket is [0.5*min, 2.0*max]
    over the edges, loose enough to contain the SoC dependence.
    """
    di = np.diff(data.current_a)
    if min_step_a is None:
        scale = np.max(np.abs(data.current_a)) if len(data.current_a) else 0.0
        min_step_a = max(0.5, 0.25 * scale)
    edges = np.nonzero(np.abs(di) >= min_step_a)[0]
    if len(edges) == 0:
        raise DataError("no current steps detected in experiment data")
    dv = np.diff(data.voltage_v)
    drops = np.abs(dv[edges] / di[edges])
    drops = drops[drops > 0]
    if len(drops) == 0:
        raise DataError("current steps produced no measurable voltage drop")
    return 0.5 * float(np.min(drops)), 2.0 * float(np.max(drops))


def default_bounds(r0_lo: float, r0_hi: float) -> dict[str, tuple[float, float]]:
    return {
        "r1": (1e-4, 0.05),
        "c1": (5e1, 5e4),
        "r2": (1e-4, 0.05),
        "c2": (1e2, 5e5),
        "a_r0": (0.0, r0_hi),
        "b_r0": (0.25 * r0_lo, r0_hi),
        "c_r0": (-10.0, 0.0),
    }


def _bounds_arrays(bounds: dict[str, tuple[float, float]]) -> tuple[np.ndarray, np.ndarray]:
    try:
        lo = np.array([bounds[g][0] for g in GENE_NAMES], dtype=float)
        hi = np.array([bounds[g][1] for g in GENE_NAMES], dtype=float)
    except KeyError as exc:
        raise DataError(f"parameter_bounds missing gene {exc}") from exc
    return lo, hi


def simulate_voltage_population(thetas: np.ndarray, data: ExperimentData,
                                ocv: OcvTable) -> np.ndarray:
    """Simulate terminal voltage for a (pop, 7) array of gene vectors.

    Vectorized across the population; the time loop applies the exact
    exponential RC update and coulomb counting used by the plant model.
    Returns a (pop, n_samples) voltage matrix.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    pop = thetas.shape[0]
    r1, c1, r2, c2, a_r0, b_r0, c_r0 = (thetas[:, k] for k in range(7))
    n = len(data.time_s)
    current = data.current_a
    dts = data.dt
    soc0 = data.initial_soc()

    soc = np.full(pop, soc0)
    i1 = np.zeros(pop)
    i2 = np.zeros(pop)
    out = np.empty((pop, n))
    cap_scale = 1.0 / (3600.0 * data.capacity_ah)
    tau1 = r1 * c1
    tau2 = r2 * c2
    # wild candidates may overflow: they come back as -inf fitness by design
    with np.errstate(over="ignore", invalid="ignore"):
        r0 = b_r0 * np.exp(c_r0 * soc) + a_r0 * np.exp(soc)
        out[:, 0] = ocv(soc) + current[0] * r0 + i1 * r1 + i2 * r2
        for k in range(1, n):
            dt = dts[k - 1]
            i_now = current[k]
            a1 = np.exp(-dt / tau1)
            a2 = np.exp(-dt / tau2)
            i1 = i_now + (i1 - i_now) * a1
            i2 = i_now + (i2 - i_now) * a2
            soc = np.clip(soc + i_now * dt * cap_scale, 0.0, 1.0)
            r0 = b_r0 * np.exp(c_r0 * soc) + a_r0 * np.exp(soc)
            out[:, k] = ocv(soc) + i_now * r0 + i1 * r1 + i2 * r2
    return out


def _theta_array(theta) -> np.ndarray:
    if isinstance(theta, CellParams):
        return np.array([theta.r1, theta.c1, theta.r2, theta.c2,
                         theta.a_r0, theta.b_r0, theta.c_r0])
    arr = np.asarray(theta, dtype=float)
    if arr.shape != (7,):
        raise DataError("theta must have 7 genes")
    return arr


def fitness(theta, data: ExperimentData, alpha_fit: float = 10.0,
            ocv: OcvTable | None = None) -> float:
    """Negative alpha_fit-scaled RMSE of the simulated voltage; 0 iff perfect."""
    table = ocv if ocv is not None else data.measured_ocv_table
    v = simulate_voltage_population(_theta_array(theta)[None, :], data, table)[0]
    if not np.all(np.isfinite(v)):
        return -math.inf
    rmse = math.sqrt(float(np.mean((data.voltage_v - v) ** 2)))
    return -alpha_fit * rmse


def _evaluate_population(thetas: np.ndarray, data: ExperimentData,
                         ocv: OcvTable, alpha_fit: float) -> np.ndarray:
    v = simulate_voltage_population(thetas, data, ocv)
    finite = np.all(np.isfinite(v), axis=1)
    fits = np.full(thetas.shape[0], -np.inf)
    if np.any(finite):
        err = v[finite] - data.voltage_v[None, :]
        fits[finite] = -alpha_fit * np.sqrt(np.mean(err**2, axis=1))
    return fits


def _report(theta: np.ndarray, data: ExperimentData, ocv: OcvTable,
            alpha_fit: float, generations: int) -> FitReport:
    v = simulate_voltage_population(theta[None, :], data, ocv)[0]
    err = v - data.voltage_v
    rmse = math.sqrt(float(np.mean(err**2)))
    mape = float(np.mean(np.abs(err) / np.abs(data.voltage_v))) * 100.0
    return FitReport(rmse_v=rmse, mape_pct=mape, fitness=-alpha_fit * rmse,
                     generations_run=generations,
                     mean_signed_error_v=float(np.mean(-err)))


def ga_fit(data: ExperimentData, cfg: GaConfig,
           ocv: OcvTable | None = None) -> tuple[np.ndarray, FitReport]:
    """Evolve gene vectors against the measured voltage.

    Tournament selection of size 2, uniform crossover, Gaussian mutation with
    sigma proportional to each gene's range (geometrically annealed), and
    elitism of one. Deterministic for a given seed: selection draws come from
    a per-generation stream and mutation draws from per-child streams keyed
    (seed, generation, child).
    """
    table = ocv if ocv is not None else data.measured_ocv_table
    bounds = cfg.parameter_bounds or default_bounds(*estimate_r0_bounds(data))
    lo, hi = _bounds_arrays(bounds)
    span = hi - lo

    rng0 = np.random.default_rng((cfg.seed, 0))
    pop = rng0.uniform(lo, hi, size=(cfg.population, 7))
    fits = _evaluate_population(pop, data, table, cfg.alpha_fit)
    if np.all(np.isinf(fits)):
        raise DataError("population collapse: every candidate produced "
                        "non-finite voltage")

    best_idx = int(np.argmax(fits))
    best = pop[best_idx].copy()
    best_fit = float(fits[best_idx])

    for gen in range(1, cfg.generations + 1):
        sel_rng = np.random.default_rng((cfg.seed, gen))
        anneal = max(cfg.mutation_decay ** (gen - 1), 
                     cfg.mutation_floor / max(cfg.mutation_scale, 1e-12))
        sigma = cfg.mutation_scale * anneal * span
        children = np.empty_like(pop)
        children[0] = best  # elitism
        for child in range(1, cfg.population):
            crng = np.random.default_rng((cfg.seed, gen, child))
            a, b = sel_rng.integers(0, cfg.population, size=2)
            p1 = pop[a] if fits[a] >= fits[b] else pop[b]
            a, b = sel_rng.integers(0, cfg.population, size=2)
            p2 = pop[a] if fits[a] >= fits[b] else pop[b]
            if crng.random() < cfg.crossover_rate:
                mask = crng.random(7) < 0.5
                genes = np.where(mask, p1, p2)
            else:
                genes = p1.copy()
            mut = crng.random(7) < cfg.mutation_rate
            genes = genes + mut * crng.normal(0.0, 1.0, 7) * sigma
            children[child] = np.clip(genes, lo, hi)
        pop = children
        fits = _evaluate_population(pop, data, table, cfg.alpha_fit)
        if np.all(np.isinf(fits)):
            raise DataError("population collapse: every candidate produced "
                            "non-finite voltage")
        gen_best = int(np.argmax(fits))
        if fits[gen_best] > best_fit:
            best_fit = float(fits[gen_best])
            best = pop[gen_best].copy()

    return best, _report(best, data, table, cfg.alpha_fit, cfg.generations)


def _fit_bias_correction(residual: np.ndarray, ocv_at_samples: np.ndarray) -> OcvCorrection:
    # Choose (a, b) so OCV + a*OCV^2 + b tracks OCV + residual in least squares.
    design = np.column_stack([ocv_at_samples**2, np.ones_like(ocv_at_samples)])
    coef, *_ = np.linalg.lstsq(design, residual, rcond=None)
    return OcvCorrection(a=float(coef[0]), b=float(coef[1]))


def _rested_mask(data: ExperimentData, rest_s: float = 60.0) -> np.ndarray:
    """Samples whose trailing rest_s seconds carried no current.

    At such points both cell and model sit on their OCV curves (branch
    currents have decayed), so the data-minus-model residual exposes the
    table bias undiluted by whatever the circuit fit absorbed elsewhere.
    """
    active = data.current_a != 0.0
    last_active = np.where(active, data.time_s, -np.inf)
    last_active = np.maximum.accumulate(last_active)
    return (data.time_s - last_active) >= rest_s


def ocv_correct(data: ExperimentData, cfg: GaConfig) -> tuple[np.ndarray, OcvCorrection, FitReport]:
    """Three-pass identification with additive quadratic OCV bias correction.

    Pass 1 fits with the measured OCV; pass 2 regresses the signed voltage
    residual against the model's OCV samples to learn (a, b); pass 3 refits
    with the corrected table. Falls back to the identity correction if the
    learned correction would destroy monotonicity.
    """
    theta1, report1 = ga_fit(data, cfg)
    table = data.measured_ocv_table

    v_model = simulate_voltage_population(theta1[None, :], data, table)[0]
    residual = data.voltage_v - v_model
    soc_traj = _soc_trajectory(data)
    ocv_samples = table(soc_traj)
    mask = _rested_mask(data)
    if np.count_nonzero(mask) < 50:
        mask = np.ones(len(residual), dtype=bool)
    corr = _fit_bias_correction(residual[mask], ocv_samples[mask])
    try:
        corrected = corr.apply(table)
    except DataError:
        corr = OcvCorrection(0.0, 0.0)
        corrected = table

    cfg3 = dataclasses.replace(cfg, seed=cfg.seed + 1)
    theta3, report3 = ga_fit(data, cfg3, ocv=corrected)
    if abs(report3.mean_signed_error_v) > abs(report1.mean_signed_error_v):
        # The correction must not make the bias worse; keep the better fit.
        return theta1, OcvCorrection(0.0, 0.0), report1
    return theta3, corr, report3


def _soc_trajectory(data: ExperimentData) -> np.ndarray:
    soc = np.empty(len(data.time_s))
    soc[0] = data.initial_soc()
    inc = data.current_a[1:] * data.dt / (3600.0 * data.capacity_ah)
    soc[1:] = soc[0] + np.cumsum(inc)
    return np.clip(soc, 0.0, 1.0)


def theta_to_cell(theta: np.ndarray, ocv: OcvTable, capacity_ah: float,
                  v_min: float, v_max: float) -> CellParams:
    t = _theta_array(theta)
    return CellParams(r1=t[0], c1=t[1], r2=t[2], c2=t[3], a_r0=t[4],
                      b_r0=t[5], c_r0=min(t[6], 0.0), ocv_table=ocv,
                      nominal_capacity_ah=capacity_ah, v_min=v_min, v_max=v_max)
