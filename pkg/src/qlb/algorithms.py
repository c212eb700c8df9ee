"""Concrete query algorithms, measurements and random test vectors."""
from __future__ import annotations

import numpy as np

from .fourier import FourierState, Measurement, PhaseFunction, ProblemDims, QueryAlgorithm
from ._rows import powers_of


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary from the QR factorisation of a complex Gaussian matrix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases[None, :]


def random_algorithm(dims: ProblemDims, T: int, rng: np.random.Generator) -> QueryAlgorithm:
    return QueryAlgorithm(dims, tuple(random_unitary(dims.dim_a, rng) for _ in range(T + 1)))


def constant_algorithm(dims: ProblemDims, T: int = 0) -> QueryAlgorithm:
    """Identity unitaries: the algorithm never looks at its input."""
    eye = np.eye(dims.dim_a, dtype=complex)
    return QueryAlgorithm(dims, tuple(eye for _ in range(T + 1)))


def _register_map(dims: ProblemDims, fn) -> np.ndarray:
    """Permutation matrix of the basis map (i, c, w) -> fn(i, c, w)."""
    d = dims.dim_a
    perm = np.zeros((d, d), dtype=complex)
    for a in range(d):
        perm[dims.index(*fn(*dims.decode(a))), a] = 1.0
    return perm


def _nonzero_preparation(q: int) -> np.ndarray:
    """Householder reflection sending |0> to the uniform superposition over c != 0."""
    target = np.zeros(q)
    target[1:] = 1 / np.sqrt(q - 1)
    u = np.zeros(q)
    u[0] = 1.0
    u -= target
    return np.eye(q) - 2 * np.outer(u, u) / (u @ u)


def blind_sequential_algorithm(n: int, q: int, T: int) -> QueryAlgorithm:
    """Queries x_1, x_2, ... in turn with a uniformly random non-zero phase.

    Every received phase value c is moved into its own base-q digit of the
    work register, so the algorithm keeps a full record of what it learned.
    """
    if T > n:
        raise ValueError("a blind sequential algorithm can query at most n variables")
    dims = ProblemDims(n, q, q ** max(T, 1))
    digit = powers_of(q, max(T, 1))

    def store(slot):
        # swap C with digit ``slot`` of W; the digit is 0 before the swap
        def fn(i, c, w):
            old = (w // digit[slot]) % q
            return i, old, w + (c - old) * digit[slot]

        return fn

    def advance(i, c, w):
        return i % n + 1, c, w

    prep_c = np.kron(np.eye(n), np.kron(_nonzero_preparation(q), np.eye(dims.dimW)))
    unitaries = [prep_c]
    for t in range(1, T + 1):
        u = _register_map(dims, store(t - 1))
        if t < T:
            u = prep_c @ _register_map(dims, advance) @ u
        unitaries.append(u)
    return QueryAlgorithm(dims, tuple(unitaries))


def difference_test_algorithm(n: int, q: int) -> tuple[QueryAlgorithm, Measurement]:
    """Two queries that learn x_1 - x_2 exactly; answers {1,2} iff they agree, else {1,3}.

    The phase register starts in the Fourier state, collects
    omega^{c (x_1 - x_2)}, and an inverse Fourier transform reads out the
    difference.
    """
    if n < 3:
        raise ValueError("needs n >= 3")
    dims = ProblemDims(n, q, 1)
    f = np.exp(2j * np.pi * np.outer(np.arange(q), np.arange(q)) / q) / np.sqrt(q)
    on_c = lambda m: np.kron(np.eye(n), m)
    u0 = on_c(f)
    negate_move = _register_map(dims, lambda i, c, w: (2 if i == 1 else 1 if i == 2 else i, (-c) % q, w))
    u1 = negate_move
    # undo the relabelling of I, then the inverse transform on C reads the difference
    u2 = on_c(f.conj().T) @ _register_map(dims, lambda i, c, w: (2 if i == 1 else 1 if i == 2 else i, c, w))
    alg = QueryAlgorithm(dims, (u0, u1, u2))
    equal = frozenset({1, 2})
    other = frozenset({1, 3})
    labels = np.array([0 if dims.decode(a)[1] == 0 else 1 for a in range(dims.dim_a)])
    return alg, Measurement(labels, (equal, other))


def random_measurement(dims: ProblemDims, responses, rng: np.random.Generator) -> Measurement:
    responses = tuple(responses)
    return Measurement(rng.integers(0, len(responses), size=dims.dim_a), responses)


def constant_measurement(dims: ProblemDims, responses, choice: int = 0) -> Measurement:
    return Measurement(np.full(dims.dim_a, choice), tuple(responses))


def _gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_sigma_codes(n: int, q: int, t: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Distinct sigma codes with support at most t, as many as available up to ``count``."""
    pw = powers_of(q, n)
    seen: set[int] = set()
    total = sum_binom_powers(n, q, t)
    target = min(count, total)
    while len(seen) < target:
        size = int(rng.integers(0, t + 1))
        supp = rng.choice(n, size=size, replace=False)
        vals = rng.integers(1, q, size=size)
        seen.add(int((vals * pw[supp]).sum()))
    return np.array(sorted(seen), dtype=np.int64)


def sum_binom_powers(n: int, q: int, t: int) -> int:
    from math import comb

    return sum(comb(n, j) * (q - 1) ** j for j in range(min(t, n) + 1))


def random_x_vector(n: int, q: int, t: int, support: int, rng: np.random.Generator) -> FourierState:
    """Sparse random vector of X_{<=t} with complex Gaussian coefficients."""
    codes = random_sigma_codes(n, q, t, support, rng)
    return FourierState(n, q, codes, _gaussian(rng, (codes.size, 1)))


def random_state(dims: ProblemDims, t: int, support: int, rng: np.random.Generator, normalize: bool = True) -> FourierState:
    """Sparse random vector of X_{<=t} (x) A, dense over A."""
    codes = random_sigma_codes(dims.n, dims.q, t, support, rng)
    amps = _gaussian(rng, (codes.size, dims.dim_a))
    if normalize:
        amps /= np.linalg.norm(amps)
    return FourierState(dims.n, dims.q, codes, amps, dims)


def sigma_vector(n: int, q: int, terms) -> FourierState:
    """X-vector sum of amp * chi_sigma from (mapping, amp) pairs."""
    data: dict[PhaseFunction, complex] = {}
    for mapping, amp in terms:
        sigma = PhaseFunction.from_mapping(mapping, q)
        data[sigma] = data.get(sigma, 0) + amp
    return FourierState.from_dict(data, n, q)
