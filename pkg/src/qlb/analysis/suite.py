"""The identity/inequality suite behind ``qlb verify``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..algorithms import constant_measurement, random_algorithm, random_measurement, random_state, random_x_vector
from ..errors import CapExceeded
from ..fourier import ProblemDims, QueryAlgorithm, fourier_from_inputs, run_uniform
from ..partitions import (
    Hierarchy,
    KnowledgeSystem,
    PartitionOrbit,
    build_hierarchy,
    from_mask,
    kdist_seed,
    unhighlight,
)
from ..transfer import ResponseSet, apply_knowledge, apply_transfer, success_probability
from .framework import check_measurement_transfer, framework_bound, relaxed_vs_strict
from .gamma import compute_gamma
from .identities import (
    EXACT_TOL,
    check_commutator,
    coefficient_sum,
    verify_ed_alterations,
    verify_inclusion_exclusion,
    verify_query_lemma,
    verify_splitting_bound,
    verify_upsilon1_bound,
    verify_xi_norm,
)
from .trajectory import TRAJECTORY_TOL, knowledge_trajectory

EQUIVALENCE_MAX_INPUTS = 200_000


@dataclass
class CheckResult:
    check_name: str
    params: dict
    value: float
    bound: float
    passed: bool
    note: str = ""

    def as_json(self) -> dict:
        out = {
            "check_name": self.check_name,
            "params": self.params,
            "value": _finite(self.value),
            "bound": _finite(self.bound),
            "pass": bool(self.passed),
        }
        if self.note:
            out["note"] = self.note
        return out


def _finite(x: float):
    x = float(x)
    return x if np.isfinite(x) else None


@dataclass
class SuiteParams:
    n: int = 4
    q: int = 5
    dimW: int = 1
    T: int = 2
    k: int = 2
    singletons: int | None = None
    samples: int = 50
    seed: int = 0
    basis_cap: int = 50_000
    orbit_cap: int | None = None
    inject_nonunitary: bool = False


def framework_orbit(hierarchy: Hierarchy) -> PartitionOrbit:
    """The intersection-flavor orbit of the top seed, used for success bounds."""
    return PartitionOrbit(unhighlight(hierarchy.seeds[hierarchy.k]), KnowledgeSystem.intersection(hierarchy.k))


def corrupted_algorithm(alg: QueryAlgorithm, factor: float = 1.1) -> QueryAlgorithm:
    """Negative control: the first unitary scaled so it no longer preserves norms."""
    unitaries = (alg.unitaries[0] * factor,) + tuple(alg.unitaries[1:])
    return QueryAlgorithm(alg.dims, unitaries, validate=False)


def run_suite(p: SuiteParams) -> list[CheckResult]:
    rng = np.random.default_rng(p.seed)
    dims = ProblemDims(p.n, p.q, p.dimW)
    base = {"n": p.n, "q": p.q, "dimW": p.dimW, "T": p.T, "k": p.k}
    out: list[CheckResult] = []

    alg = random_algorithm(dims, p.T, rng)
    if p.inject_nonunitary:
        alg = corrupted_algorithm(alg)
    defect = alg.unitarity_defect()
    out.append(CheckResult("unitarity", base, defect, 1e-9, defect < 1e-9))

    states = run_uniform(alg)
    norm_err = max(abs(s.norm() - 1.0) for s in states)
    out.append(CheckResult("norm_preservation", base, norm_err, 1e-9, norm_err < 1e-9))

    over = max(int(states[j].max_support()) - j // 2 for j in range(len(states)))
    out.append(CheckResult("support_bound", base, over, 0, over <= 0))

    if p.q**p.n <= EQUIVALENCE_MAX_INPUTS:
        diff = (fourier_from_inputs(alg) - states[-1]).amps
        err = float(np.abs(diff).max()) if diff.size else 0.0
        out.append(CheckResult("fourier_equivalence", base, err, 1e-9, err < 1e-9))

    hierarchy = build_hierarchy(kdist_seed(p.n, p.k, p.singletons), cap=p.orbit_cap)
    for level, orbit in sorted(hierarchy.levels.items()):
        chk = check_commutator(orbit, p.q, p.samples, rng)
        params = {**base, "level": level, "samples": chk.samples}
        out.append(CheckResult("commutator_identity", params, chk.max_residual, EXACT_TOL, chk.passed))

    report = knowledge_trajectory(alg, hierarchy, trajectory=states)
    rows = [r for r in report.rows if not np.isnan(r.identity_residual)]
    worst_identity = max((r.identity_residual for r in rows), default=0.0)
    out.append(CheckResult("query_identity", base, worst_identity, TRAJECTORY_TOL, worst_identity <= TRAJECTORY_TOL))
    for name in ("simple_residual", "refined_residual", "telescoped_residual"):
        vals = [getattr(r, name) for r in rows if not np.isnan(getattr(r, name))]
        worst = min(vals, default=0.0)
        out.append(CheckResult(name.replace("_residual", "_gain_bound"), base, worst, -TRAJECTORY_TOL, worst >= -TRAJECTORY_TOL))
    start = max((r.knowledge for r in report.rows if r.t == 0), default=0.0)
    out.append(CheckResult("initial_knowledge_zero", base, start, TRAJECTORY_TOL, start <= TRAJECTORY_TOL))
    drift = max((abs(r.knowledge - r.knowledge_prime) for r in report.rows), default=0.0)
    out.append(CheckResult("knowledge_unitary_invariance", base, drift, TRAJECTORY_TOL, drift <= TRAJECTORY_TOL))
    plain_err = max((abs(v - 1) for vs in report.plain_norms.values() for v in vs), default=0.0)
    out.append(CheckResult("plain_transfer_norm", base, plain_err, TRAJECTORY_TOL, plain_err <= TRAJECTORY_TOL))

    t = max(p.T, 1)
    for level in range(2, p.k + 1):
        orbit = hierarchy.levels[level]
        worst_margin, fails = np.inf, 0
        for _ in range(p.samples):
            mu2 = orbit.members[int(rng.integers(len(orbit)))]
            i = int(rng.choice(from_mask(mu2.highlighted_block)))
            res = verify_splitting_bound(mu2, i, random_x_vector(p.n, p.q, t + 1, 12, rng))
            worst_margin = min(worst_margin, res.margin)
            fails += not res.passed
        out.append(CheckResult("splitting_bound", {**base, "level": level}, worst_margin, -EXACT_TOL, fails == 0))

        worst_margin, fails, ratio = np.inf, 0, 0.0
        for _ in range(max(1, p.samples // 5)):
            res = verify_query_lemma(orbit, hierarchy.levels[level - 1], random_state(dims, t, 12, rng))
            worst_margin = min(worst_margin, res.margin)
            fails += not res.passed
            ratio = res.extra["ratio"]
        out.append(CheckResult("query_lemma", {**base, "level": level, "ratio": ratio}, worst_margin, -EXACT_TOL, fails == 0))

    worst_margin, fails = np.inf, 0
    for _ in range(p.samples):
        res = verify_upsilon1_bound(hierarchy.plain[1], hierarchy.levels[1], random_x_vector(p.n, p.q, t, 12, rng), t)
        worst_margin = min(worst_margin, res.margin)
        fails += not res.passed
    out.append(CheckResult("upsilon1_bound", {**base, "t": t}, worst_margin, -EXACT_TOL, fails == 0))

    if p.k == 2 and p.n >= 4:
        ed = framework_orbit(hierarchy)
        rep = verify_ed_alterations(ed, random_x_vector(p.n, p.q, p.n // 2, 40, rng), p.samples, rng)
        value = max(rep.max_residual_zero, rep.max_residual_split)
        out.append(CheckResult("ed_alterations", {**base, "zero_cases": rep.cases_zero, "split_cases": rep.cases_split}, value, EXACT_TOL, rep.passed))

    coeff_bad = sum(coefficient_sum(k, a, b) != 0 for k in range(2, 6) for a in range(k) for b in range(k) if a + b < k)
    out.append(CheckResult("inclusion_exclusion_coefficients", {"k_max": 5}, coeff_bad, 0, coeff_bad == 0))
    if p.k >= 3 and p.n >= 3 * p.k:
        orbit = framework_orbit(hierarchy)
        rep = verify_inclusion_exclusion(p.k, orbit, random_x_vector(p.n, p.q, p.n // 2, 40, rng), max(1, p.samples // 5), rng)
        if rep.samples:
            out.append(CheckResult("inclusion_exclusion_numeric", {**base, "samples": rep.samples}, rep.max_residual, 1e-9, rep.passed))
        else:
            out.append(CheckResult("inclusion_exclusion_numeric", base, float("nan"), 1e-9, True, note="skipped: no admissible (mu, tau) sampled"))
    for level in range(2, p.k):
        rep = verify_xi_norm(hierarchy, level, states[-1])
        out.append(CheckResult("xi_norm", {**base, "level": level}, rep.value, rep.bound, rep.passed))

    out.extend(_framework_checks(p, dims, hierarchy, alg, states, rng))
    return out


def _framework_checks(p: SuiteParams, dims: ProblemDims, hierarchy: Hierarchy, alg, states, rng) -> list[CheckResult]:
    out = []
    base = {"n": p.n, "q": p.q, "dimW": p.dimW, "T": p.T, "k": p.k}
    orbit = framework_orbit(hierarchy)
    responses = ResponseSet(orbit)
    sets = responses.as_sets()
    try:
        gamma = compute_gamma(orbit, "minus", p.T, p.q, max_basis=p.basis_cap)
    except CapExceeded as exc:
        return [CheckResult("framework_bound", base, float("nan"), float("nan"), True, note=f"skipped: {exc}")]

    meas = random_measurement(dims, sets, rng)
    psi = states[-1]
    measured = success_probability(apply_transfer(psi, orbit), meas, responses)
    delta = apply_knowledge(psi, orbit, "plus").norm()
    chk = framework_bound(gamma.gamma, delta, measured)
    out.append(CheckResult("framework_bound", {**base, "gamma": gamma.gamma, "delta": delta}, chk.measured, chk.bound, chk.passed))

    transfer = check_measurement_transfer(orbit, "minus", gamma, dims, p.samples, rng)
    out.append(CheckResult("measurement_transfer", base, transfer.worst_ratio, transfer.gamma + transfer.slack, transfer.passed))

    const = random_algorithm(dims, 0, rng)
    gamma0 = compute_gamma(orbit, "minus", 0, p.q)
    meas0 = constant_measurement(dims, sets)
    measured0 = success_probability(apply_transfer(run_uniform(const)[-1], orbit), meas0, responses)
    chk0 = framework_bound(gamma0.gamma, 0.0, measured0)
    gap = abs(chk0.bound - measured0)
    out.append(CheckResult("framework_constant_equality", {**base, "T": 0}, measured0, chk0.bound, gap < 1e-9))

    try:
        rs = relaxed_vs_strict(alg, orbit, meas)
    except (CapExceeded, ValueError) as exc:
        out.append(CheckResult("relaxed_vs_strict", base, float("nan"), float("nan"), True, note=f"skipped: {exc}"))
        return out
    out.append(CheckResult("relaxed_vs_strict", {**base, "p_collision": rs.p_collision}, rs.p_strict, rs.bound, rs.passed))
    agree = abs(rs.p_relaxed - measured)
    out.append(CheckResult("relaxed_success_oracle", base, agree, 1e-9, agree < 1e-9))
    return out
