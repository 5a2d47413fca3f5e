"""Balanced radial power flow by backward/forward sweep, plus violation stats.

The feeder is a radial tree with one fixed-voltage source. Each iteration
sweeps load currents from the leaves to the source (backward) and voltage
drops from the source outward (forward), until the largest voltage change
falls under tolerance. Loads are constant-PQ. Everything is per-unit on the
feeder base; line impedances may be given in ohms or per-unit.

Violation statistics follow the 5%-from-nominal rule: the share of
(bus, time) samples whose voltage magnitude deviates more than the threshold,
with a baseline-subtraction mode for marginal-impact studies.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, PowerFlowError

DEFAULT_TOL_PU = 1e-8
MAX_ITERATIONS = 100
ANSI_THRESHOLD = 0.05


@dataclass(frozen=True)
class Bus:
    id: str
    p_kw: float = 0.0
    q_kvar: float = 0.0


@dataclass(frozen=True)
class Line:
    from_bus: str
    to_bus: str
    r_pu: float
    x_pu: float

    @property
    def z(self) -> complex:
        return complex(self.r_pu, self.x_pu)


@dataclass
class Feeder:
    buses: list[Bus]
    lines: list[Line]
    source_bus: str
    source_v_pu: float = 1.0
    base_kva: float = 1000.0
    base_kv: float = 4.16
    transformer: dict = field(default_factory=dict)
    station_bus: str | None = None

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate bus ids")
        if self.source_bus not in ids:
            raise DataError("source bus not present")
        if len(self.lines) != len(self.buses) - 1:
            raise PowerFlowError("feeder is not radial: need |lines| == |buses|-1")
        self._index = {b.id: i for i, b in enumerate(self.buses)}
        self._build_tree()

    def _build_tree(self):
        adj: dict[str, list[tuple[str, int]]] = {b.id: [] for b in self.buses}
        for li, ln in enumerate(self.lines):
            if ln.from_bus not in self._index or ln.to_bus not in self._index:
                raise DataError(f"line references unknown bus: {ln}")
            adj[ln.from_bus].append((ln.to_bus, li))
            adj[ln.to_bus].append((ln.from_bus, li))
        parent: dict[str, tuple[str, int] | None] = {self.source_bus: None}
        order = [self.source_bus]
        q = deque([self.source_bus])
        while q:
            node = q.popleft()
            for nb, li in adj[node]:
                if nb not in parent:
                    parent[nb] = (node, li)
                    order.append(nb)
                    q.append(nb)
        if len(order) != len(self.buses):
            raise PowerFlowError("feeder is not connected")
        self._parent = parent
        self._order = order  # source first, then breadth-first outward

    @property
    def bus_ids(self) -> list[str]:
        return [b.id for b in self.buses]

    def spot_injections(self) -> dict[str, tuple[float, float]]:
        return {b.id: (b.p_kw, b.q_kvar) for b in self.buses}


@dataclass
class PowerFlowSolution:
    bus_ids: list[str]
    v_pu: np.ndarray           # complex voltages in feeder order
    iterations: int
    max_mismatch_pu: float
    line_flow_kva: dict[tuple[str, str], complex]
    losses_kw: float

    def magnitude(self, bus_id: str) -> float:
        return float(abs(self.v_pu[self.bus_ids.index(bus_id)]))

    def magnitudes(self) -> np.ndarray:
        return np.abs(self.v_pu)

    def angles(self) -> np.ndarray:
        return np.angle(self.v_pu)


def load_feeder(path: str | Path) -> Feeder:
    """Read the network JSON (buses, lines, source, transformer block)."""
    doc = json.loads(Path(path).read_text())
    base_kva = float(doc.get("base_kva", 1000.0))
    base_kv = float(doc.get("base_kv", 4.16))
    z_base = base_kv**2 * 1000.0 / base_kva
    buses = [Bus(str(b["id"]), float(b.get("p_kw", 0.0)),
                 float(b.get("q_kvar", 0.0))) for b in doc["buses"]]
    lines = []
    for ln in doc["lines"]:
        if "r_pu" in ln:
            r_pu, x_pu = float(ln["r_pu"]), float(ln["x_pu"])
        else:
            r_pu, x_pu = float(ln["r_ohm"]) / z_base, float(ln["x_ohm"]) / z_base
        lines.append(Line(str(ln["from"]), str(ln["to"]), r_pu, x_pu))
    return Feeder(buses=buses, lines=lines,
                  source_bus=str(doc["source_bus"]),
                  source_v_pu=float(doc.get("source_v_pu", 1.0)),
                  base_kva=base_kva, base_kv=base_kv,
                  transformer=doc.get("transformer", {}),
                  station_bus=doc.get("station_bus"))


def solve_powerflow(feeder: Feeder,
                    injections: dict[str, tuple[float, float]] | None = None,
                    tol_pu: float = DEFAULT_TOL_PU,
                    max_iter: int = MAX_ITERATIONS) -> PowerFlowSolution:
    """Backward/forward sweep to a fixed point of the load-flow equations.

    injections are (P_kw, Q_kvar) consumption-positive, added on top of the
    feeder's spot loads.
    """
    idx = feeder._index
    n = len(feeder.buses)
    s_pu = np.zeros(n, dtype=complex)
    for b in feeder.buses:
        s_pu[idx[b.id]] = complex(b.p_kw, b.q_kvar) / feeder.base_kva
    if injections:
        for bus_id, (p, q) in injections.items():
            if bus_id not in idx:
                raise DataError(f"unknown bus id {bus_id!r}")
            s_pu[idx[bus_id]] += complex(p, q) / feeder.base_kva

    order = feeder._order
    parent = feeder._parent
    v = np.full(n, complex(feeder.source_v_pu, 0.0))
    src = idx[feeder.source_bus]

    line_current: dict[int, complex] = {}
    for it in range(1, max_iter + 1):
        # Backward: accumulate branch currents from the leaves inward.
        node_current = np.conj(s_pu / v)
        subtree = node_current.copy()
        for bus_id in reversed(order):
            par = parent[bus_id]
            if par is None:
                continue
            par_bus, li = par
            subtree[idx[par_bus]] += subtree[idx[bus_id]]
            line_current[li] = subtree[idx[bus_id]]
        # Forward: propagate voltage drops from the source outward.
        v_new = v.copy()
        v_new[src] = complex(feeder.source_v_pu, 0.0)
        for bus_id in order:
            par = parent[bus_id]
            if par is None:
                continue
            par_bus, li = par
            v_new[idx[bus_id]] = v_new[idx[par_bus]] \
                - feeder.lines[li].z * line_current[li]
        mismatch = float(np.max(np.abs(v_new - v)))
        v = v_new
        if mismatch < tol_pu:
            flows = {}
            losses = 0.0
            for li, ln in enumerate(feeder.lines):
                i_line = line_current.get(li, 0j)
                s_from = v[idx[ln.from_bus]] * np.conj(i_line) * feeder.base_kva
                flows[(ln.from_bus, ln.to_bus)] = s_from
                losses += float(abs(i_line) ** 2 * ln.r_pu) * feeder.base_kva
            return PowerFlowSolution(bus_ids=feeder.bus_ids, v_pu=v,
                                     iterations=it, max_mismatch_pu=mismatch,
                                     line_flow_kva=flows, losses_kw=losses)
    worst = feeder.bus_ids[int(np.argmin(np.abs(v)))]
    raise PowerFlowError(
        f"power flow did not converge in {max_iter} iterations "
        f"(worst bus {worst})", worst_bus=worst)


@dataclass
class ViolationStats:
    pct_samples: float          # share of (bus, time) samples violating, %
    pct_timesteps: float        # share of timesteps with any violation, %
    violating_samples: int
    total_samples: int
    worst_by_bus: dict[str, float]
    marginal_pct_samples: float | None = None


def count_violations(magnitudes: np.ndarray, bus_ids: list[str],
                     threshold: float = ANSI_THRESHOLD,
                     baseline_magnitudes: np.ndarray | None = None) -> ViolationStats:
    """Violation statistics over a (time, bus) voltage-magnitude matrix.

    A sample violates when its magnitude deviates from 1.0 pu by strictly
    more than the threshold. Both the per-sample and per-timestep
    denominators are reported; when a baseline run is supplied, the marginal
    percentage subtracts its per-sample rate.
    """
    mags = np.atleast_2d(np.asarray(magnitudes, dtype=float))
    if mags.size == 0:
        raise DataError("no power flow samples")
    if mags.shape[1] != len(bus_ids):
        raise DataError("bus id list does not match magnitude columns")
    dev = np.abs(mags - 1.0)
    # strictly-greater comparison, robust to float representation of the bound
    mask = dev > threshold * (1.0 + 1e-12) + 1e-15
    total = mags.size
    violating = int(np.count_nonzero(mask))
    pct = violating / total * 100.0
    pct_steps = float(np.count_nonzero(mask.any(axis=1))) / mags.shape[0] * 100.0
    worst = {bus_ids[j]: float(np.max(dev[:, j])) for j in range(len(bus_ids))}
    marginal = None
    if baseline_magnitudes is not None:
        base = count_violations(baseline_magnitudes, bus_ids, threshold)
        marginal = pct - base.pct_samples
    return ViolationStats(pct_samples=pct, pct_timesteps=pct_steps,
                          violating_samples=violating, total_samples=total,
                          worst_by_bus=worst, marginal_pct_samples=marginal)


def convert_spot_load_tables(bus_rows: list[dict], line_rows: list[dict],
                             base_kva: float = 1000.0,
                             base_kv: float = 4.16,
                             source_bus: str = "source") -> Feeder:
    """Reduce per-phase spot-load/line tables to a balanced equivalent feeder.

    bus_rows: {id, p_kw_a, p_kw_b, p_kw_c, q_kvar_a, ...} (missing phases 0);
    line_rows: {from, to, r_ohm, x_ohm} with per-phase series impedance.
    Phase loads are summed into a single balanced equivalent per bus.
    """
    buses = []
    for row in bus_rows:
        p = sum(float(row.get(f"p_kw_{ph}", 0.0)) for ph in "abc")
        q = sum(float(row.get(f"q_kvar_{ph}", 0.0)) for ph in "abc")
        buses.append(Bus(str(row["id"]), p, q))
    z_base = base_kv**2 * 1000.0 / base_kva
    lines = [Line(str(r["from"]), str(r["to"]),
                  float(r["r_ohm"]) / z_base, float(r["x_ohm"]) / z_base)
             for r in line_rows]
    return Feeder(buses=buses, lines=lines, source_bus=source_bus,
                  base_kva=base_kva, base_kv=base_kv)
