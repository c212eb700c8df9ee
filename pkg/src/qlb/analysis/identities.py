"""Exact identities and per-lemma inequalities checked on small instances.

The beta sums here are evaluated by explicit summation over the sigma's of
a vector, independently of the vectorised operators in ``qlb.transfer``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb

import numpy as np

from ..errors import HierarchyMismatch
from ..fourier import FourierState, PhaseFunction, project_Xle
from ..partitions import (
    AnyPartition,
    HighlightedPartition,
    KnowledgeSystem,
    Partition,
    PartitionOrbit,
    canonical,
    from_mask,
    knowledge_contains,
    popcount,
    split_off,
    to_mask,
    unhighlight,
)
from ..transfer import (
    apply_knowledge,
    apply_phase_shift_Y,
    apply_query_gain,
    apply_transfer,
    transfer_sigma,
)
from ..fourier import apply_phase_shift
from .._rows import combine

EXACT_TOL = 1e-10


def y_distance(a, b) -> float:
    """Norm of a - b without pruning small entries."""
    _, amps = combine(a.keys, a.amps, b.keys, b.amps, -1.0, prune=0.0)
    return float(np.linalg.norm(amps))


@lru_cache(maxsize=64)
def _orbit_for(seed: AnyPartition, knowledge: KnowledgeSystem | None) -> PartitionOrbit:
    return PartitionOrbit(seed, knowledge)


def orbit_containing(mu: AnyPartition, knowledge: KnowledgeSystem | None = None) -> PartitionOrbit:
    """Orbit of mu, cached by its canonical type representative."""
    return _orbit_for(canonical(mu), knowledge)


# ------------------------------------------------------------- commutator


def commutator_residual(orbit: PartitionOrbit, member: int, i: int, c: int, sigma: PhaseFunction, q: int) -> tuple[float, float]:
    """|| (U+ O - O U+) chi_sigma - (O Ud - Ud O) chi_sigma || for one member, Ud the boundary-i operator.

    Returns the residual and the norm of the commutator itself.
    """
    chi = FourierState(orbit.n, q, np.array([sigma.encode(orbit.n, q)]), np.ones((1, 1)))
    shifted = apply_phase_shift(chi, i, c)
    plus_after = apply_knowledge(shifted, orbit, "plus", member=member)
    plus_before = apply_phase_shift_Y(apply_knowledge(chi, orbit, "plus", member=member), i, c)
    bnd_before = apply_phase_shift_Y(apply_knowledge(chi, orbit, "boundary", i=i, member=member), i, c)
    bnd_after = apply_knowledge(shifted, orbit, "boundary", i=i, member=member)
    lhs_keys, lhs = combine(plus_after.keys, plus_after.amps, plus_before.keys, plus_before.amps, -1.0, prune=0.0)
    rhs_keys, rhs = combine(bnd_before.keys, bnd_before.amps, bnd_after.keys, bnd_after.amps, -1.0, prune=0.0)
    _, diff = combine(lhs_keys, lhs, rhs_keys, rhs, -1.0, prune=0.0)
    return float(np.linalg.norm(diff)), float(np.linalg.norm(lhs))


def random_sigma(n: int, q: int, max_support: int, rng: np.random.Generator) -> PhaseFunction:
    size = int(rng.integers(0, min(max_support, n) + 1))
    supp = rng.choice(np.arange(1, n + 1), size=size, replace=False)
    vals = rng.integers(1, q, size=size)
    return PhaseFunction.from_mapping(dict(zip(supp.tolist(), vals.tolist())), q)


@dataclass
class SampledCheck:
    name: str
    samples: int
    max_residual: float
    failures: int
    tol: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.failures == 0 and self.samples > 0


def near_boundary_sample(orbit: PartitionOrbit, member: int, q: int, rng: np.random.Generator) -> tuple[int, int, PhaseFunction]:
    """(i, c, sigma) with sigma one step away from, on, or just inside the knowledge boundary.

    sigma covers k-1 or k elements of a block that can carry knowledge, i is
    drawn from that block, and c sometimes cancels sigma(i); a few random
    extra indices are added outside the block.
    """
    mu = orbit.members[member]
    k = orbit.k
    if orbit.highlighted:
        block = mu.highlighted_block
    else:
        block = next(b for b in mu.blocks if popcount(b) >= k)
    elems = from_mask(block)
    i = int(rng.choice(elems))
    size = int(rng.integers(max(k - 1, 0), k + 1))
    chosen = [int(e) for e in rng.choice(elems, size=min(size, len(elems)), replace=False)]
    outside = [e for e in range(1, orbit.n + 1) if e not in elems]
    extra = int(rng.integers(0, min(2, len(outside)) + 1))
    chosen += [int(e) for e in rng.choice(outside, size=extra, replace=False)] if extra else []
    sigma = PhaseFunction.from_mapping({e: int(rng.integers(1, q)) for e in chosen}, q)
    c = int(rng.integers(1, q))
    if i in sigma.support and rng.random() < 0.5:
        c = (-sigma.as_dict()[i]) % q
    return i, c, sigma


def check_commutator(orbit: PartitionOrbit, q: int, samples: int, rng: np.random.Generator, tol: float = EXACT_TOL) -> SampledCheck:
    """Sampled (member, i, c != 0, sigma) check of the per-member commutator identity.

    Half of the samples are uniform, half are drawn next to the knowledge
    boundary where both sides of the identity are non-zero.
    """
    worst, bad, nontrivial = 0.0, 0, 0
    for s in range(samples):
        member = int(rng.integers(len(orbit)))
        if s % 2:
            i, c, sigma = near_boundary_sample(orbit, member, q, rng)
        else:
            i = int(rng.integers(1, orbit.n + 1))
            c = int(rng.integers(1, q))
            sigma = random_sigma(orbit.n, q, orbit.k + 1, rng)
        r, size = commutator_residual(orbit, member, i, c, sigma, q)
        worst = max(worst, r)
        bad += r >= tol
        nontrivial += size > 0
    return SampledCheck("commutator", samples, worst, bad, tol, {"nonzero_commutators": int(nontrivial)})


# --------------------------------------------------------------- splitting


@dataclass
class InequalityResult:
    lhs: float
    rhs: float
    slack: float
    extra: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs + self.slack


def verify_splitting_bound(mu2: HighlightedPartition, i: int, phi: FourierState, slack: float = EXACT_TOL) -> InequalityResult:
    """|| U^{boundary i}_{mu2} phi || <= || U^+_{mu1} phi || with mu1 = split_off(mu2, i)."""
    mu1 = split_off(mu2, i)
    orbit2 = orbit_containing(mu2, KnowledgeSystem.highlighted())
    orbit1 = orbit_containing(mu1, KnowledgeSystem.highlighted())
    lhs = apply_knowledge(phi, orbit2, "boundary", i=i, member=orbit2.member_id(mu2)).norm()
    rhs = apply_knowledge(phi, orbit1, "plus", member=orbit1.member_id(mu1)).norm()
    return InequalityResult(lhs, rhs, slack)


def verify_query_lemma(orbit2: PartitionOrbit, orbit1: PartitionOrbit, psi: FourierState, slack: float = EXACT_TOL) -> InequalityResult:
    """|| Psi_2 psi || <= sqrt(|M1|/|M2|) || U+_1 psi ||."""
    seed2 = orbit2.seed
    if not isinstance(seed2, HighlightedPartition) or not orbit1.highlighted:
        raise HierarchyMismatch("both orbits must be highlighted")
    hb = seed2.highlighted_block
    if popcount(hb) < 2 or not any(split_off(seed2, i) in orbit1 for i in from_mask(hb)):
        raise HierarchyMismatch("the lower orbit is not a split of the upper one")
    ratio = np.sqrt(len(orbit1) / len(orbit2))
    lhs = apply_query_gain(psi, orbit2).norm()
    rhs = ratio * apply_knowledge(psi, orbit1, "plus").norm()
    return InequalityResult(lhs, rhs, slack, {"ratio": float(ratio), "inv_sqrt_n": 1 / np.sqrt(orbit2.n)})


def singleton_count(mu: AnyPartition) -> int:
    return sum(1 for s in mu.sizes() if s == 1)


def verify_upsilon1_bound(plain: PartitionOrbit, marked: PartitionOrbit, phi: FourierState, t: int, slack: float = EXACT_TOL) -> InequalityResult:
    """|| U+_bullet phi ||^2 <= (t/|S|) || U_circ phi ||^2 on phi truncated to X_{<=t}."""
    seed = marked.seed
    if not isinstance(seed, HighlightedPartition) or popcount(seed.highlighted_block) != 1:
        raise HierarchyMismatch("the marked orbit must highlight a singleton")
    if unhighlight(seed) not in plain or plain.highlighted:
        raise HierarchyMismatch("the marked orbit does not come from the plain one")
    phi = project_Xle(phi, t)
    singles = singleton_count(plain.seed)
    lhs = apply_knowledge(phi, marked, "plus").norm() ** 2
    base = apply_transfer(phi, plain).norm() ** 2
    rhs = t / singles * base
    return InequalityResult(lhs, rhs, slack, {"singletons": singles, "tightness": lhs / rhs if rhs > 0 else 0.0})


# --------------------------------------------------------------- beta sums


def _alpha_table(phi: FourierState) -> list[tuple[PhaseFunction, complex]]:
    if phi.width != 1:
        raise ValueError("beta sums need a pure X-vector")
    return [(PhaseFunction.decode(code, phi.n, phi.q), complex(a)) for code, a in zip(phi.codes, phi.amps[:, 0])]


def _in_minus(mu: AnyPartition, sigma: PhaseFunction, k: int) -> bool:
    mask = sigma.support_mask
    return not any(popcount(mask & b) >= k for b in mu.blocks)


def beta_minus(alphas, mu: Partition, tau: dict[int, int], k: int, q: int) -> complex:
    """sum of alpha_sigma over sigma with block sums tau and no block meeting supp(sigma) in >= k points."""
    target = {b: v % q for b, v in tau.items() if v % q}
    total = 0j
    for sigma, alpha in alphas:
        if dict(transfer_sigma(mu, sigma, q).entries) == target and _in_minus(mu, sigma, k):
            total += alpha
    return total


def coefficient_sum(k: int, l1: int, l2: int) -> Fraction:
    """sum_i (-1)^i / C(k,i) * C(k-l1, i) * C(k-l2, k-i), exactly."""
    return sum((Fraction((-1) ** i * comb(k - l1, i) * comb(k - l2, k - i), comb(k, i)) for i in range(k + 1)), Fraction(0))


def coefficient_count(k: int, l1: int, l2: int, i: int) -> int:
    """Brute-force count of k-subsets J of rho u D with |J n D| = i that contain a fixed C."""
    rho = list(range(k))
    dset = list(range(k, 2 * k))
    C = set(rho[:l1]) | set(dset[:l2])
    return sum(
        1
        for J in itertools.combinations(rho + dset, k)
        if len(set(J) & set(dset)) == i and C <= set(J)
    )


@dataclass
class AlterationReport:
    samples: int
    skipped: int
    max_residual_zero: float
    max_residual_split: float
    cases_zero: int
    cases_split: int
    qm_am_failures: int

    @property
    def passed(self) -> bool:
        return (
            self.max_residual_zero < EXACT_TOL
            and self.max_residual_split < EXACT_TOL
            and self.qm_am_failures == 0
            and self.cases_zero + self.cases_split > 0
        )


def _singletons(mu: Partition) -> list[int]:
    return [from_mask(b)[0] for b in mu.blocks if popcount(b) == 1]


def _sample_tau(alphas, mu: Partition, k: int, q: int, rng: np.random.Generator, want_zero: bool | None):
    """tau = transfer(mu, sigma0) for a random sigma0 of the vector lying in L^- of mu."""
    pool = [s for s, _ in alphas if _in_minus(mu, s, k)]
    rng.shuffle(pool)
    big = next(b for b in mu.blocks if popcount(b) >= 2)
    for sigma in pool:
        tau = dict(transfer_sigma(mu, sigma, q).entries)
        if want_zero is None or (tau.get(big, 0) == 0) == want_zero:
            return tau
    return None


def verify_ed_alterations(orbit: PartitionOrbit, phi: FourierState, samples: int, rng: np.random.Generator) -> AlterationReport:
    """Element-distinctness alteration identities for beta^-, by explicit summation.

    For (mu, tau) with pair {a, b} of value v and zero singletons {c}, {d},
    mu' splits {a, b} into singletons and merges {c, d}; then
    beta^-[mu, tau] = beta^-[mu', tau'] if v = 0, and
    beta^-[mu, tau] = beta^-[mu', tau_a] + beta^-[mu', tau_b] otherwise.
    """
    n, q = phi.n, phi.q
    if n < 4:
        raise ValueError("needs n >= 4")
    alphas = _alpha_table(phi)
    worst0 = worst1 = 0.0
    cases0 = cases1 = skipped = qm_bad = 0
    for s in range(samples):
        mu = orbit.members[int(rng.integers(len(orbit)))]
        tau = _sample_tau(alphas, mu, 2, q, rng, want_zero=bool(s % 2 == 0))
        if tau is None:
            skipped += 1
            continue
        pair = next(b for b in mu.blocks if popcount(b) == 2)
        a, b = from_mask(pair)
        zeros = [e for e in _singletons(mu) if tau.get(1 << (e - 1), 0) == 0]
        if len(zeros) < 2:
            skipped += 1
            continue
        c, d = (int(x) for x in rng.choice(zeros, size=2, replace=False))
        v = tau.get(pair, 0)
        others = [blk for blk in mu.blocks if blk not in (pair, 1 << (c - 1), 1 << (d - 1))]
        mu2 = Partition(n, tuple(others + [1 << (a - 1), 1 << (b - 1), to_mask((c, d))]))
        base = {blk: tau.get(blk, 0) for blk in others}
        lhs = beta_minus(alphas, mu, tau, 2, q)
        if v == 0:
            rhs = beta_minus(alphas, mu2, base, 2, q)
            worst0 = max(worst0, abs(lhs - rhs))
            cases0 += 1
        else:
            ta = beta_minus(alphas, mu2, {**base, 1 << (a - 1): v}, 2, q)
            tb = beta_minus(alphas, mu2, {**base, 1 << (b - 1): v}, 2, q)
            worst1 = max(worst1, abs(lhs - (ta + tb)))
            qm_bad += abs(lhs) ** 2 > 2 * (abs(ta) ** 2 + abs(tb) ** 2) + EXACT_TOL
            cases1 += 1
    if cases0 + cases1 == 0:
        raise ValueError("no sampled (mu, tau) had two zero-valued singletons")
    return AlterationReport(samples, skipped, worst0, worst1, cases0, cases1, qm_bad)


@dataclass
class InclusionExclusionReport:
    k: int
    coefficient_zero: bool
    coefficient_cases: int
    samples: int
    max_residual: float
    max_term: float

    @property
    def passed(self) -> bool:
        return self.coefficient_zero and self.samples > 0 and self.max_residual < 1e-9


def verify_inclusion_exclusion(k: int, orbit: PartitionOrbit, phi: FourierState, samples: int, rng: np.random.Generator) -> InclusionExclusionReport:
    """(a) exact coefficient identity for l1 + l2 < k; (b) the alternating beta^- sum over J subsets of rho u D."""
    cases = [(l1, l2) for l1 in range(k) for l2 in range(k) if l1 + l2 < k]
    coeff_ok = all(coefficient_sum(k, l1, l2) == 0 for l1, l2 in cases)
    n, q = phi.n, phi.q
    alphas = _alpha_table(phi)
    worst = 0.0
    biggest = 0.0
    done = 0
    attempts = 0
    while done < samples and attempts < 20 * samples:
        attempts += 1
        mu = orbit.members[int(rng.integers(len(orbit)))]
        big = next(b for b in mu.blocks if popcount(b) >= k)
        tau = _sample_tau(alphas, mu, k, q, rng, want_zero=None)
        if tau is None:
            continue
        zeros = [e for e in _singletons(mu) if tau.get(1 << (e - 1), 0) == 0]
        if len(zeros) < k:
            continue
        rho = tuple(sorted(int(x) for x in rng.choice(from_mask(big), size=k, replace=False)))
        D = tuple(sorted(int(x) for x in rng.choice(zeros, size=k, replace=False)))
        a0 = big & ~to_mask(rho)
        v = tau.get(big, 0)
        rest = [blk for blk in mu.blocks if blk != big and blk not in [1 << (d - 1) for d in D]]
        base = {blk: tau.get(blk, 0) for blk in rest}
        total = 0j
        for J in itertools.combinations(rho + D, k):
            i = len(set(J) & set(D))
            aj = a0 | to_mask(J)
            singles = [1 << (e - 1) for e in rho + D if e not in J]
            mu_j = Partition(n, tuple(rest + [aj] + singles))
            beta = beta_minus(alphas, mu_j, {**base, aj: v}, k, q)
            biggest = max(biggest, abs(beta))
            total += (-1) ** i / comb(k, i) * beta
        worst = max(worst, abs(total))
        done += 1
    return InclusionExclusionReport(k, coeff_ok, len(cases), done, worst, biggest)


# ---------------------------------------------------------------- Xi norm


def reconstruction_count(plain_seed: Partition, level: int, j: int) -> int:
    """Max over i of the (B, J) choices that merge into a level-sized block B containing i.

    J is a j-block of the partition (empty for j = 0) and B is J plus
    level - j singletons different from J.
    """
    blocks = plain_seed.blocks
    singles = [b for b in blocks if popcount(b) == 1]
    best = 0
    for i in range(1, plain_seed.n + 1):
        bit = 1 << (i - 1)
        count = 0
        j_blocks = [b for b in blocks if popcount(b) == j] if j > 0 else [0]
        for J in j_blocks:
            pool = [s for s in singles if s != J]
            for extra in itertools.combinations(pool, level - j):
                B = J
                for s in extra:
                    B |= s
                if B & bit:
                    count += 1
        best = max(best, count)
    return best


@dataclass
class XiNormReport:
    level: int
    n: int
    value: float
    bound: float
    terms: dict[int, float]
    power_terms: dict[int, float]
    slack: float = 1e-9

    @property
    def passed(self) -> bool:
        return self.value <= self.bound + self.slack

    @property
    def scaled(self) -> float:
        return self.value * np.sqrt(self.n)


def verify_xi_norm(hierarchy, level: int, psi_prime: FourierState) -> XiNormReport:
    """|| Xi U+_level psi' || against the explicit inclusion-exclusion bound.

    bound^2 = 2^level * sum_j count_j * |M_oj| / |M_level| * || U_oj psi' ||^2,
    where count_j is the exact number of (B, J) reconstructions (j = 0 is
    folded into the j = 1 level as both land in M_o1).
    """
    from ..transfer import apply_xi

    if not 2 <= level <= hierarchy.k - 1:
        raise ValueError(f"level must lie in 2..{hierarchy.k - 1}, got {level}")
    orbit = hierarchy.levels[level]
    value = apply_xi(apply_knowledge(psi_prime, orbit, "plus")).norm()
    terms: dict[int, float] = {}
    power_terms: dict[int, float] = {}
    n = hierarchy.n
    for j in range(0, level + 1):
        plain = hierarchy.plain[max(j, 1)]
        count = reconstruction_count(plain.seed, level, j)
        norm2 = apply_transfer(psi_prime, plain).norm() ** 2
        terms[j] = 2**level * count * len(plain) / len(orbit) * norm2
        power_terms[j] = n ** (level - j) * len(plain) / len(orbit)
    bound = float(np.sqrt(sum(terms.values())))
    return XiNormReport(level, n, value, bound, terms, power_terms)
