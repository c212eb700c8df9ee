"""Knowledge trajectories and the per-query gain inequalities along them."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..fourier import FourierState, QueryAlgorithm, run_uniform
from ..partitions import Hierarchy, PartitionOrbit, check_hierarchy
from ..transfer import YState, apply_oracle_Y, apply_xi, chunk_step, pushforwards
from .._rows import combine

TRAJECTORY_TOL = 1e-9


@dataclass
class StepRow:
    t: int
    level: str
    knowledge: float
    knowledge_prime: float
    gain_prime: float = float("nan")
    gain_next: float = float("nan")
    profile: float = float("nan")
    knowledge_next: float = float("nan")
    identity_residual: float = float("nan")
    simple_residual: float = float("nan")
    refined_residual: float = float("nan")
    telescoped_residual: float = float("nan")

    @property
    def gain(self) -> float:
        return self.gain_prime + self.gain_next


@dataclass
class TrajectoryReport:
    n: int
    q: int
    T: int
    rows: list[StepRow]
    plain_norms: dict[str, list[float]] = field(default_factory=dict)
    tol: float = TRAJECTORY_TOL

    def level(self, name: str) -> list[StepRow]:
        return [r for r in self.rows if r.level == name]

    def failures(self) -> list[str]:
        out = []
        for r in self.rows:
            if abs(r.knowledge - r.knowledge_prime) > self.tol:
                out.append(f"t={r.t} {r.level}: knowledge changed under U_t")
            if r.t == 0 and r.knowledge > self.tol:
                out.append(f"{r.level}: initial knowledge {r.knowledge}")
            if np.isnan(r.identity_residual):
                continue
            if r.identity_residual > self.tol:
                out.append(f"t={r.t} {r.level}: query identity residual {r.identity_residual:.3g}")
            for name in ("simple_residual", "refined_residual", "telescoped_residual"):
                value = getattr(r, name)
                if not np.isnan(value) and value < -self.tol:
                    out.append(f"t={r.t} {r.level}: {name} {value:.3g}")
        for name, norms in self.plain_norms.items():
            for t, v in enumerate(norms):
                if abs(v - 1.0) > self.tol:
                    out.append(f"t={t} {name}: norm {v} != 1")
        return out

    @property
    def passed(self) -> bool:
        return not self.failures()


def _y(state: FourierState, orbit: PartitionOrbit, keys, amps) -> YState:
    return YState(orbit, state.q, keys, amps, state.dims)


def _step_quantities(psi_prime: FourierState, psi_next: FourierState, orbit: PartitionOrbit, profile: bool):
    """Norms for one query step, accumulated member-chunk by member-chunk.

    Returns |U+ psi'|, |U+ psi_next|, |Psi psi'|, |Psi psi_next|,
    |Xi U+ psi'| and the query identity residual.
    """
    acc = np.zeros(6)
    step = min(chunk_step(psi_prime, orbit), chunk_step(psi_next, orbit))
    chunks = zip(pushforwards(psi_prime, orbit, step=step), pushforwards(psi_next, orbit, step=step))
    for p_prime, p_next in chunks:
        plus_prime = _y(psi_prime, orbit, *p_prime.rows("plus"))
        plus_next = _y(psi_next, orbit, *p_next.rows("plus"))
        gain_prime = _y(psi_prime, orbit, *p_prime.query_gain_rows())
        gain_next = _y(psi_next, orbit, *p_next.query_gain_rows())
        acc[0] += plus_prime.norm() ** 2
        acc[1] += plus_next.norm() ** 2
        acc[2] += gain_prime.norm() ** 2
        acc[3] += gain_next.norm() ** 2
        if profile:
            acc[4] += apply_xi(plus_prime).norm() ** 2
        lhs = combine(plus_next.keys, plus_next.amps, *_parts(apply_oracle_Y(plus_prime)), -1.0, prune=0.0)
        rhs = combine(*_parts(apply_oracle_Y(gain_prime)), gain_next.keys, gain_next.amps, -1.0, prune=0.0)
        _, diff = combine(*lhs, *rhs, -1.0, prune=0.0)
        acc[5] += float(np.sum(np.abs(diff) ** 2))
    return np.sqrt(acc)


def _parts(y: YState):
    return y.keys, y.amps


def _plus_norm(state: FourierState, orbit: PartitionOrbit) -> float:
    total = 0.0
    for p in pushforwards(state, orbit):
        _, amps = p.rows("plus")
        total += float(np.sum(np.abs(amps) ** 2))
    return float(np.sqrt(total))


def _transfer_norm(state: FourierState, orbit: PartitionOrbit) -> float:
    total = 0.0
    for p in pushforwards(state, orbit):
        _, amps = p.rows("transfer")
        total += float(np.sum(np.abs(amps) ** 2))
    return float(np.sqrt(total))


def knowledge_trajectory(
    alg: QueryAlgorithm,
    hierarchy: Hierarchy | dict[str, PartitionOrbit],
    *,
    trajectory: list[FourierState] | None = None,
    plain_levels: bool = True,
) -> TrajectoryReport:
    """Knowledge, gains and bound residuals for every level and step.

    ``hierarchy`` is a Hierarchy (levels named "M1".."Mk") or a mapping of
    names to orbits with knowledge systems.  Residuals are "bound minus
    measured", so they must be >= -tol; the query identity residual is a norm.
    """
    if isinstance(hierarchy, Hierarchy):
        check_hierarchy(hierarchy)
        levels = {f"M{l}": o for l, o in sorted(hierarchy.levels.items())}
        plain = {f"Mo{l}": o for l, o in sorted(hierarchy.plain.items())} if plain_levels else {}
    else:
        levels, plain = dict(hierarchy), {}
    states = trajectory if trajectory is not None else run_uniform(alg)
    T = alg.T
    rows: list[StepRow] = []
    for name, orbit in levels.items():
        profile = orbit.highlighted
        knowledge = _plus_norm(states[0], orbit)
        cumulative = 0.0
        for t in range(T + 1):
            psi_prime = states[2 * t + 1]
            if t == T:
                rows.append(StepRow(t, name, knowledge, _plus_norm(psi_prime, orbit)))
                break
            psi_next = states[2 * t + 2]
            kp, kn, gp, gn, prof, ident = _step_quantities(psi_prime, psi_next, orbit, profile)
            g = gp + gn
            cumulative += g
            row = StepRow(
                t=t,
                level=name,
                knowledge=knowledge,
                knowledge_prime=kp,
                gain_prime=gp,
                gain_next=gn,
                profile=prof if profile else float("nan"),
                knowledge_next=kn,
                identity_residual=ident,
                simple_residual=g - (kn - knowledge),
                refined_residual=(2 * prof * g + g * g - (kn**2 - knowledge**2)) if profile else float("nan"),
                telescoped_residual=cumulative - kn,
            )
            rows.append(row)
            knowledge = kn
    plain_norms = {name: [_transfer_norm(states[2 * t], orbit) for t in range(T + 1)] for name, orbit in plain.items()}
    dims = alg.dims
    return TrajectoryReport(dims.n, dims.q, T, rows, plain_norms)


@dataclass
class ScalingFit:
    constant: float
    per_n: dict[int, float]
    normalized: dict[tuple[int, int], float]
    window: tuple[float, float]

    @property
    def passed(self) -> bool:
        lo, hi = self.window
        consts = list(self.per_n.values())
        spread_ok = all(lo <= a / b <= hi for a in consts for b in consts)
        points_ok = all(lo <= v <= 1.0 + 1e-12 for v in self.normalized.values())
        return spread_ok and points_ok


def fit_power_law(measured: dict[tuple[int, int], float], shape, window=(0.3, 3.0)) -> ScalingFit:
    """Fit measured[(n, t)] <= C * shape(n, t) with one C across all n.

    C is the largest ratio, so the bound holds at every point; the fit is
    accepted when the per-n constants agree within ``window`` and every
    non-zero point sits within ``window`` of the bound.
    """
    ratios = {key: v / shape(*key) for key, v in measured.items() if v > 0}
    if not ratios:
        raise ValueError("nothing to fit: every measurement is zero")
    C = max(ratios.values())
    per_n: dict[int, float] = {}
    for (n, _), r in ratios.items():
        per_n[n] = max(per_n.get(n, 0.0), r)
    normalized = {key: r / C for key, r in ratios.items()}
    return ScalingFit(C, per_n, normalized, window)
