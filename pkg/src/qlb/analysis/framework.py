"""Success-probability bounds: the (gamma + delta)^2 pipeline and strict vs relaxed inputs."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..algorithms import random_measurement, random_state
from ..errors import CapExceeded, RankCollapse
from ..fourier import FourierState, Measurement, ProblemDims, QueryAlgorithm, simulate_inputs
from ..partitions import PartitionOrbit, from_mask, max_orbit_cap, to_mask
from ..transfer import ResponseSet, apply_knowledge, members_containing, success_probability
from .gamma import RANK_TOL, GammaReport, _range_whitener

PIPELINE_SLACK = 1e-8


@dataclass
class FrameworkCheck:
    gamma: float
    delta: float
    measured: float
    slack: float = PIPELINE_SLACK

    @property
    def bound(self) -> float:
        return (self.gamma + self.delta) ** 2

    @property
    def margin(self) -> float:
        return self.bound - self.measured

    @property
    def passed(self) -> bool:
        return self.measured <= self.bound + self.slack


def framework_bound(gamma: float, delta: float, measured: float, slack: float = PIPELINE_SLACK) -> FrameworkCheck:
    """measured <= (gamma + delta)^2 + slack."""
    return FrameworkCheck(float(gamma), float(delta), float(measured), slack)


def gamma_of_span(orbit: PartitionOrbit, flavor: str, vectors: list[FourierState], q: int, rank_tol: float = RANK_TOL) -> GammaReport:
    """gamma of the subspace spanned by the images of explicit X-vectors.

    Each vector must be one-column (X only); flavor is transfer or minus.
    """
    if flavor not in ("transfer", "minus"):
        raise ValueError(f"flavor must be transfer or minus, got {flavor!r}")
    if not vectors:
        raise ValueError("need at least one vector")
    images = [apply_knowledge(v, orbit, flavor) for v in vectors]
    if any(y.width != 1 for y in images):
        raise ValueError("span vectors must live in X alone")
    keys = np.unique(np.concatenate([y.keys for y in images]))
    A = np.zeros((keys.size, len(images)), dtype=complex)
    for j, y in enumerate(images):
        A[np.searchsorted(keys, y.keys), j] = y.amps[:, 0]
    G = A.conj().T @ A
    if not np.isfinite(G).all() or np.abs(G).max() == 0:
        raise RankCollapse(f"{flavor} image of the span is zero")
    W, rank = _range_whitener(G, rank_tol)
    AW = A @ W
    row_member = keys // q**orbit.num_blocks
    responses = ResponseSet(orbit)
    table = responses.member_table()
    per_rho = {}
    for r, rho in enumerate(responses.responses):
        block = AW[table[r][row_member]]
        g2 = float(np.linalg.eigvalsh(block.conj().T @ block)[-1]) if block.size else 0.0
        per_rho[from_mask(rho)] = float(np.sqrt(max(g2, 0.0)))
    best = max(per_rho, key=per_rho.get)
    return GammaReport(
        orbit=orbit.describe(),
        flavor=flavor,
        n=orbit.n,
        q=q,
        t=max(int(v.max_support()) for v in vectors),
        gamma=per_rho[best],
        gamma_per_response=per_rho,
        rank=rank,
        rank_tol=rank_tol,
        basis_size=len(vectors),
        method="span",
        argmax=best,
    )


@dataclass
class MeasurementTransfer:
    gamma: float
    samples: int
    worst_ratio: float
    slack: float = PIPELINE_SLACK

    @property
    def passed(self) -> bool:
        return self.worst_ratio <= self.gamma + self.slack


def check_measurement_transfer(
    orbit: PartitionOrbit, flavor: str, report: GammaReport, dims: ProblemDims, samples: int, rng: np.random.Generator, support: int = 8
) -> MeasurementTransfer:
    """||sum_rho (M_rho x Pi_rho) y|| <= gamma ||y|| for y in the image tensored with A."""
    responses = ResponseSet(orbit)
    sets = responses.as_sets()
    worst = 0.0
    for _ in range(samples):
        psi = random_state(dims, report.t, support, rng)
        y = apply_knowledge(psi, orbit, flavor)
        norm = y.norm()
        if norm == 0:
            continue
        meas = random_measurement(dims, sets, rng)
        p = success_probability(y, meas, responses)
        worst = max(worst, np.sqrt(p) / norm)
    return MeasurementTransfer(report.gamma, samples, float(worst))


# ---------------------------------------------------------------- relaxed vs strict


@dataclass
class RelaxedStrict:
    p_strict: float
    p_relaxed: float
    p_collision: float
    inputs: int

    @property
    def ratio(self) -> float:
        return self.p_strict / self.p_relaxed if self.p_relaxed else float("nan")

    @property
    def bound(self) -> float:
        return self.p_relaxed / (1.0 - self.p_collision)

    @property
    def passed(self) -> bool:
        return self.p_strict <= self.bound * (1 + 1e-12)


def _correct_mask(orbit: PartitionOrbit, meas: Measurement) -> np.ndarray:
    """correct[m, label]: response number ``label`` is right for member m."""
    cols = [members_containing(orbit, to_mask(sorted(r))) for r in meas.responses]
    return np.stack(cols, axis=1)


def relaxed_vs_strict(alg: QueryAlgorithm, orbit: PartitionOrbit, meas: Measurement, cap: int | None = None) -> RelaxedStrict:
    """Exhaustive success over relaxed inputs (mu, z) and over strict ones (z injective).

    Each member is weighted 1/|M| and each z uniformly, as in the relaxed
    distribution; the strict average keeps only the z with distinct values,
    which is exactly the event that x agrees with mu.
    """
    dims = alg.dims
    if orbit.n != dims.n:
        raise ValueError("orbit and algorithm disagree on n")
    m = orbit.num_blocks
    total = len(orbit) * dims.q**m
    if dims.q < m:
        raise ValueError(f"q={dims.q} admits no injective assignment to {m} blocks")
    cap = max_orbit_cap() if cap is None else cap
    if total > cap:
        raise CapExceeded(f"{total} relaxed inputs exceed the cap {cap}")
    zs = np.array(list(itertools.product(range(dims.q), repeat=m)), dtype=np.int64).reshape(-1, m)
    injective = np.array([len(set(z)) == m for z in zs.tolist()])
    correct = _correct_mask(orbit, meas)
    relaxed = strict = 0.0
    for mid in range(len(orbit)):
        xs = zs[:, orbit.labels[mid]]
        finals = simulate_inputs(alg, xs)
        good = correct[mid][meas.labels]
        success = np.sum(np.abs(finals[:, good]) ** 2, axis=1)
        relaxed += success.mean()
        strict += success[injective].mean()
    p_collision = 1.0 - injective.mean()
    return RelaxedStrict(float(strict / len(orbit)), float(relaxed / len(orbit)), float(p_collision), total)


def exhaustive_success(alg: QueryAlgorithm, orbit: PartitionOrbit, meas: Measurement, cap: int | None = None) -> float:
    """Relaxed success probability by per-input simulation; oracle for the Y-side formula."""
    return relaxed_vs_strict(alg, orbit, meas, cap).p_relaxed
