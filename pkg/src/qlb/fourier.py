"""Query algorithms and their states in the Fourier basis of the input register.

The joint space is X (x) A where X = (C^q)^n holds the input and
A = I (x) C (x) W is the algorithm's register.  A basis state of A is indexed
by ``algIndex = ((i - 1) * q + c) * dimW + w`` with ``i`` 1-based.

States are stored sparsely over the character label sigma and densely over A.
A sigma is encoded as the integer ``sum_i sigma(i) * q**(i - 1)``.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from ._rows import PRUNE_TOL, check_key_space, combine, digits_of, powers_of, prune_rows, scatter_columns

UNITARY_TOL = 1e-9


def omega(k, q: int):
    """exp(2*pi*i*k/q) with the exponent reduced mod q first."""
    return np.exp(2j * np.pi * (np.asarray(k) % q) / q)


@dataclass(frozen=True)
class ProblemDims:
    n: int
    q: int
    dimW: int = 1

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if int(self.q) < 2:
            raise ValueError(f"q must be at least 2, got {self.q}")
        if int(self.dimW) < 1:
            raise ValueError(f"dimW must be positive, got {self.dimW}")
        check_key_space(self.q**self.n)

    @property
    def dim_a(self) -> int:
        return self.n * self.q * self.dimW

    def index(self, i: int, c: int, w: int = 0) -> int:
        if not (1 <= i <= self.n and 0 <= c < self.q and 0 <= w < self.dimW):
            raise ValueError(f"({i}, {c}, {w}) out of range for {self}")
        return ((i - 1) * self.q + c) * self.dimW + w

    def decode(self, a: int) -> tuple[int, int, int]:
        if not 0 <= a < self.dim_a:
            raise ValueError(f"algIndex {a} out of range")
        w = a % self.dimW
        c = (a // self.dimW) % self.q
        i = a // (self.dimW * self.q) + 1
        return i, c, w

    @property
    def index_i(self) -> np.ndarray:
        """1-based queried index for every algIndex."""
        return np.arange(self.dim_a) // (self.dimW * self.q) + 1

    @property
    def index_c(self) -> np.ndarray:
        return (np.arange(self.dim_a) // self.dimW) % self.q


@dataclass(frozen=True)
class PhaseFunction:
    """Sparse sigma: sorted (index, value) pairs with index 1-based and value != 0."""

    entries: tuple[tuple[int, int], ...] = ()

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, int] | Iterable[tuple[int, int]], q: int) -> "PhaseFunction":
        items = mapping.items() if isinstance(mapping, Mapping) else mapping
        acc: dict[int, int] = {}
        for i, c in items:
            acc[int(i)] = (acc.get(int(i), 0) + int(c)) % q
        return cls(tuple(sorted((i, c) for i, c in acc.items() if c)))

    @classmethod
    def decode(cls, code: int, n: int, q: int) -> "PhaseFunction":
        entries = []
        for i in range(1, n + 1):
            code, c = divmod(int(code), q)
            if c:
                entries.append((i, c))
        return cls(tuple(entries))

    def encode(self, n: int, q: int) -> int:
        code = 0
        for i, c in self.entries:
            if not 1 <= i <= n:
                raise ValueError(f"index {i} outside [1, {n}]")
            code += (c % q) * q ** (i - 1)
        return code

    def shifted(self, i: int, c: int, q: int) -> "PhaseFunction":
        return PhaseFunction.from_mapping(list(self.entries) + [(i, c)], q)

    def as_dict(self) -> dict[int, int]:
        return dict(self.entries)

    @property
    def support(self) -> frozenset[int]:
        return frozenset(i for i, _ in self.entries)

    @property
    def support_mask(self) -> int:
        mask = 0
        for i, _ in self.entries:
            mask |= 1 << (i - 1)
        return mask

    def __len__(self) -> int:
        return len(self.entries)

    def __str__(self) -> str:
        if not self.entries:
            return "{}"
        return ",".join(f"{i}->{c}" for i, c in self.entries)


@dataclass(frozen=True, eq=False)
class FourierState:
    """Vector in X (x) A with rows keyed by sigma codes.

    ``dims`` is optional: a pure X-vector uses a single column and no dims.
    """

    n: int
    q: int
    codes: np.ndarray
    amps: np.ndarray
    dims: ProblemDims | None = None

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        amps = np.asarray(self.amps, dtype=complex)
        if amps.ndim != 2 or amps.shape[0] != codes.shape[0]:
            raise ValueError("amplitude matrix must have one row per sigma")
        if self.dims is not None and amps.shape[1] != self.dims.dim_a:
            raise ValueError(f"expected {self.dims.dim_a} columns, got {amps.shape[1]}")
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "amps", amps)

    @property
    def width(self) -> int:
        return self.amps.shape[1]

    @classmethod
    def from_dict(
        cls,
        mapping: Mapping[tuple[PhaseFunction, int], complex] | Mapping[PhaseFunction, complex],
        n: int,
        q: int,
        dims: ProblemDims | None = None,
    ) -> "FourierState":
        """Build from {(sigma, a): amp} or, for pure X-vectors, {sigma: amp}."""
        width = dims.dim_a if dims is not None else 1
        rows: dict[int, np.ndarray] = {}
        for key, amp in mapping.items():
            sigma, a = (key, 0) if isinstance(key, PhaseFunction) else key
            code = sigma.encode(n, q)
            row = rows.setdefault(code, np.zeros(width, dtype=complex))
            row[a] += amp
        codes = np.array(sorted(rows), dtype=np.int64)
        amps = np.array([rows[c] for c in codes], dtype=complex).reshape(len(codes), width)
        codes, amps = prune_rows(codes, amps)
        return cls(n, q, codes, amps, dims)

    def to_dict(self) -> dict[tuple[PhaseFunction, int], complex]:
        return {(sigma, a): amp for sigma, a, amp in self.entries()}

    def entries(self) -> Iterator[tuple[PhaseFunction, int, complex]]:
        for code, row in zip(self.codes, self.amps):
            sigma = PhaseFunction.decode(code, self.n, self.q)
            for a in np.flatnonzero(row):
                yield sigma, int(a), complex(row[a])

    def digits(self) -> np.ndarray:
        return digits_of(self.codes, self.q, self.n)

    def support_masks(self) -> np.ndarray:
        nz = self.digits() != 0
        return nz.astype(np.int64) @ powers_of(2, self.n)

    def support_sizes(self) -> np.ndarray:
        return (self.digits() != 0).sum(axis=1)

    def max_support(self) -> int:
        return int(self.support_sizes().max(initial=0))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def _like(self, codes, amps) -> "FourierState":
        return FourierState(self.n, self.q, codes, amps, self.dims)

    def __add__(self, other: "FourierState") -> "FourierState":
        self._check_compatible(other)
        return self._like(*combine(self.codes, self.amps, other.codes, other.amps))

    def __sub__(self, other: "FourierState") -> "FourierState":
        self._check_compatible(other)
        return self._like(*combine(self.codes, self.amps, other.codes, other.amps, -1.0))

    def __mul__(self, scalar: complex) -> "FourierState":
        return self._like(self.codes, self.amps * scalar)

    __rmul__ = __mul__

    def _check_compatible(self, other: "FourierState") -> None:
        if (self.n, self.q, self.width) != (other.n, other.q, other.width):
            raise ValueError("states live in different spaces")

    def serialize(self) -> str:
        """Debug text, one line per entry: ``sigma | algIndex | re | im``."""
        lines = [f"{sigma} | {a} | {amp.real:.17g} | {amp.imag:.17g}" for sigma, a, amp in self.entries()]
        return "\n".join(lines)


@dataclass(frozen=True, eq=False)
class QueryAlgorithm:
    dims: ProblemDims
    unitaries: tuple[np.ndarray, ...]
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        mats = tuple(np.asarray(u, dtype=complex) for u in self.unitaries)
        if not mats:
            raise ValueError("an algorithm needs at least U_0")
        d = self.dims.dim_a
        for t, u in enumerate(mats):
            if u.shape != (d, d):
                raise ValueError(f"U_{t} has shape {u.shape}, expected {(d, d)}")
        object.__setattr__(self, "unitaries", mats)
        if self.validate and not self.is_unitary():
            raise ValueError(f"unitarity defect {self.unitarity_defect():.3g} exceeds {UNITARY_TOL}")
        if self.T > self.dims.n:
            warnings.warn(f"T={self.T} exceeds n={self.dims.n}; the lower-bound analysis assumes T <= n", stacklevel=2)

    @property
    def T(self) -> int:
        return len(self.unitaries) - 1

    def unitarity_defect(self) -> float:
        eye = np.eye(self.dims.dim_a)
        return max(float(np.abs(u.conj().T @ u - eye).max()) for u in self.unitaries)

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        return self.unitarity_defect() < tol


@dataclass(frozen=True, eq=False)
class Measurement:
    """Orthogonal measurement on A given by a label per algIndex.

    ``labels[a]`` indexes into ``responses``.
    """

    labels: np.ndarray
    responses: tuple

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1:
            raise ValueError("labels must be one-dimensional")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.responses)):
            raise ValueError("label outside the response set")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "responses", tuple(self.responses))

    def mask(self, correct: Iterable) -> np.ndarray:
        index = {r: j for j, r in enumerate(self.responses)}
        wanted = [index[r] for r in correct if r in index]
        return np.isin(self.labels, wanted)


def uniform_initial_state(dims: ProblemDims) -> FourierState:
    amps = np.zeros((1, dims.dim_a), dtype=complex)
    amps[0, 0] = 1.0
    return FourierState(dims.n, dims.q, np.zeros(1, dtype=np.int64), amps, dims)


def apply_oracle(state: FourierState) -> FourierState:
    """Fourier-basis oracle: entry (sigma, (i, c, w)) moves to sigma + {i -> c}."""
    dims = state.dims
    if dims is None:
        raise ValueError("the oracle needs algorithm dimensions")
    if state.codes.size == 0:
        return state
    q = dims.q
    i_idx = dims.index_i - 1
    c_val = dims.index_c
    digit = state.digits()[:, i_idx]
    shift = ((digit + c_val) % q - digit) * powers_of(q, dims.n)[i_idx]
    new_codes = state.codes[:, None] + shift
    return state._like(*scatter_columns(new_codes, state.amps))


def apply_phase_shift(state: FourierState, i: int, c: int) -> FourierState:
    """O_{i,c} on X: every sigma becomes sigma + {i -> c}."""
    if not 1 <= i <= state.n:
        raise ValueError(f"index {i} outside [1, {state.n}]")
    q = state.q
    digit = state.digits()[:, i - 1]
    codes = state.codes + ((digit + c) % q - digit) * q ** (i - 1)
    order = np.argsort(codes)
    return state._like(codes[order], state.amps[order])


def apply_unitary(state: FourierState, U: np.ndarray) -> FourierState:
    U = np.asarray(U)
    if U.shape != (state.width, state.width):
        raise ValueError(f"unitary of shape {U.shape} does not act on dimension {state.width}")
    return state._like(*prune_rows(state.codes, state.amps @ U.T))


def project_Xle(state: FourierState, t: int) -> FourierState:
    if t < 0:
        raise ValueError("t must be non-negative")
    keep = state.support_sizes() <= t
    return state._like(state.codes[keep], state.amps[keep])


def run_uniform(alg: QueryAlgorithm) -> list[FourierState]:
    """Trajectory [psi_0, psi'_0, psi_1, psi'_1, ..., psi_T, psi'_T]."""
    psi = uniform_initial_state(alg.dims)
    out = []
    for t, U in enumerate(alg.unitaries):
        if t > 0:
            psi = apply_oracle(psi)
        out.append(psi)
        psi = apply_unitary(psi, U)
        out.append(psi)
    return out


def all_inputs(n: int, q: int) -> np.ndarray:
    """Every x in Z_q^n, x_1 varying slowest; shape (q**n, n)."""
    return np.array(list(itertools.product(range(q), repeat=n)), dtype=np.int64).reshape(-1, n)


def simulate_inputs(alg: QueryAlgorithm, xs: np.ndarray) -> np.ndarray:
    """Standard-basis final states for a batch of inputs; shape (len(xs), dim A)."""
    dims = alg.dims
    xs = np.atleast_2d(np.asarray(xs, dtype=np.int64))
    if xs.shape[1] != dims.n:
        raise ValueError(f"inputs must have length {dims.n}")
    phases = omega(dims.index_c[None, :] * xs[:, dims.index_i - 1], dims.q)
    psi = np.zeros((xs.shape[0], dims.dim_a), dtype=complex)
    psi[:, 0] = 1.0
    for t, U in enumerate(alg.unitaries):
        if t > 0:
            psi = psi * phases
        psi = psi @ U.T
    return psi


def standard_basis_simulate(alg: QueryAlgorithm, x: Sequence[int]) -> np.ndarray:
    return simulate_inputs(alg, np.asarray(x)[None, :])[0]


def fourier_from_inputs(alg: QueryAlgorithm) -> FourierState:
    """Assemble q^{-n/2} sum_x |x>|psi'_x,T> and rewrite X in the character basis."""
    dims = alg.dims
    n, q = dims.n, dims.q
    xs = all_inputs(n, q)
    finals = simulate_inputs(alg, xs)
    spectrum = np.fft.fftn(finals.reshape((q,) * n + (dims.dim_a,)), axes=tuple(range(n))) / q**n
    # axis j of the spectrum carries sigma(j + 1); flatten so row r has digits xs[r]
    codes = xs @ powers_of(q, n)
    amps = spectrum.reshape(q**n, dims.dim_a)
    order = np.argsort(codes)
    return FourierState(n, q, *prune_rows(codes[order], amps[order]), dims)


def success_probability_pointwise(alg: QueryAlgorithm, x, meas: Measurement, correct: Iterable) -> float:
    psi = standard_basis_simulate(alg, x)
    return float(np.sum(np.abs(psi[meas.mask(correct)]) ** 2))
