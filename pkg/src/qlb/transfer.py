"""Transfer, knowledge, query-gain and query-profile operators into Y (x) A.

A YState row is keyed by ``member_id * q**m + tau_code`` where ``m`` is the
number of blocks of every orbit member and ``tau_code`` packs the block
values in canonical block order (``tau(B_b) * q**b``).  Columns run over A.

All pushforwards are computed member-chunk by member-chunk, in member order,
so results are bit-stable.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from ._rows import check_key_space, combine, digits_of, powers_of, prune_rows, reduce_rows, scatter_columns
from .fourier import FourierState, Measurement, PhaseFunction, ProblemDims
from .partitions import AnyPartition, HighlightedPartition, PartitionOrbit, from_mask, k_subsets, lowest, to_mask

CHUNK_BUDGET = 1 << 21
FLAVORS = ("transfer", "plus", "minus", "boundary")


@dataclass(frozen=True)
class BlockFunction:
    """tau over the blocks of one partition: (block mask, value) pairs, zero values omitted."""

    entries: tuple[tuple[int, int], ...] = ()

    def key(self) -> tuple[tuple[int, int], ...]:
        """Serialised form: sorted (smallest element of block, value) pairs."""
        return tuple(sorted((lowest(b), v) for b, v in self.entries))

    def as_dict(self) -> dict[int, int]:
        return dict(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __str__(self) -> str:
        if not self.entries:
            return "{}"
        return ",".join("{" + ",".join(map(str, from_mask(b))) + "}->" + str(v) for b, v in self.entries)


def transfer_sigma(mu: AnyPartition, sigma: PhaseFunction, q: int) -> BlockFunction:
    values = sigma.as_dict()
    out = []
    for b in mu.blocks:
        total = sum(values.get(i, 0) for i in from_mask(b)) % q
        if total:
            out.append((b, total))
    return BlockFunction(tuple(sorted(out, key=lambda e: lowest(e[0]))))


@dataclass(frozen=True, eq=False)
class YState:
    orbit: PartitionOrbit
    q: int
    keys: np.ndarray
    amps: np.ndarray
    dims: ProblemDims | None = None

    def __post_init__(self):
        object.__setattr__(self, "keys", np.asarray(self.keys, dtype=np.int64))
        object.__setattr__(self, "amps", np.asarray(self.amps, dtype=complex))

    @property
    def base(self) -> int:
        return self.q ** self.orbit.num_blocks

    @property
    def width(self) -> int:
        return self.amps.shape[1]

    @property
    def member_ids(self) -> np.ndarray:
        return self.keys // self.base

    @property
    def tau_codes(self) -> np.ndarray:
        return self.keys % self.base

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def _like(self, keys, amps) -> "YState":
        return YState(self.orbit, self.q, keys, amps, self.dims)

    def _check(self, other: "YState") -> None:
        if other.orbit is not self.orbit or other.q != self.q or other.width != self.width:
            raise ValueError("Y states over different orbits or registers")

    def __add__(self, other: "YState") -> "YState":
        self._check(other)
        return self._like(*combine(self.keys, self.amps, other.keys, other.amps))

    def __sub__(self, other: "YState") -> "YState":
        self._check(other)
        return self._like(*combine(self.keys, self.amps, other.keys, other.amps, -1.0))

    def __mul__(self, scalar: complex) -> "YState":
        return self._like(self.keys, self.amps * scalar)

    __rmul__ = __mul__

    def restrict(self, member_mask: np.ndarray) -> "YState":
        keep = np.asarray(member_mask, bool)[self.member_ids]
        return self._like(self.keys[keep], self.amps[keep])

    def block_function(self, member_id: int, tau_code: int) -> BlockFunction:
        mu = self.orbit.members[member_id]
        vals = digits_of(np.array([tau_code]), self.q, self.orbit.num_blocks)[0]
        return BlockFunction(tuple((b, int(v)) for b, v in zip(mu.blocks, vals) if v))

    def entries(self) -> Iterator[tuple[int, BlockFunction, int, complex]]:
        for key, row in zip(self.keys, self.amps):
            mid, code = divmod(int(key), self.base)
            tau = self.block_function(mid, code)
            for a in np.flatnonzero(row):
                yield mid, tau, int(a), complex(row[a])

    def to_dict(self) -> dict[tuple[int, tuple, int], complex]:
        return {(mid, tau.key(), a): amp for mid, tau, a, amp in self.entries()}

    def serialize(self) -> str:
        """Debug text: ``member | tau | algIndex | re | im`` per entry."""
        return "\n".join(
            f"{self.orbit.members[mid]} | {tau} | {a} | {amp.real:.17g} | {amp.imag:.17g}"
            for mid, tau, a, amp in self.entries()
        )


def empty_y(orbit: PartitionOrbit, q: int, width: int, dims: ProblemDims | None = None) -> YState:
    return YState(orbit, q, np.zeros(0, np.int64), np.zeros((0, width), complex), dims)


class Pushforward:
    """Block sums and intersection counts of every sigma of a state against a chunk of members."""

    def __init__(self, state: FourierState, orbit: PartitionOrbit, members: np.ndarray, scale: float):
        q, m = state.q, orbit.num_blocks
        check_key_space(len(orbit), q**m)
        if state.n != orbit.n:
            raise ValueError(f"state has n={state.n}, orbit has n={orbit.n}")
        self.state, self.orbit, self.members, self.scale = state, orbit, members, scale
        digits = state.digits()
        self.nz = digits != 0
        labels = orbit.labels[members]
        onehot = (labels[:, :, None] == np.arange(m)[None, None, :]).astype(np.int64)
        self.labels = labels
        tau_digits = np.einsum("sn,cnm->scm", digits, onehot) % q
        self.tau = tau_digits @ powers_of(q, m)
        self.counts = np.einsum("sn,cnm->scm", self.nz.astype(np.int64), onehot)
        self.keys = members[None, :] * q**m + self.tau

    @property
    def knowledge(self):
        kn = self.orbit.knowledge
        if kn is None:
            raise ValueError(f"{self.orbit.describe()} carries no knowledge system")
        return kn

    def plus(self) -> np.ndarray:
        kn = self.knowledge
        if kn.kind == "intersection":
            return self.counts.max(axis=2) >= kn.k
        hpos = self.orbit.highlight_pos[self.members]
        hsize = self.orbit.block_sizes[self.members, hpos]
        hcount = np.take_along_axis(self.counts, hpos[None, :, None], axis=2)[:, :, 0]
        return hcount == hsize[None, :]

    def boundary_all(self) -> np.ndarray:
        """mask[s, c, i-1]: supp(sigma_s) in L^{boundary i} of member c."""
        kn = self.knowledge
        outside = ~self.nz[:, None, :]
        plus = self.plus()[:, :, None]
        if kn.kind == "intersection":
            at_i = np.take_along_axis(self.counts, np.broadcast_to(self.labels[None], (self.counts.shape[0],) + self.labels.shape), axis=2)
            return ~plus & outside & (at_i == kn.k - 1)
        hpos = self.orbit.highlight_pos[self.members]
        hsize = self.orbit.block_sizes[self.members, hpos]
        hcount = np.take_along_axis(self.counts, hpos[None, :, None], axis=2)[:, :, 0]
        in_hl = (self.labels == hpos[:, None])[None, :, :]
        return ~plus & outside & in_hl & (hcount == hsize[None, :] - 1)[:, :, None]

    def mask(self, flavor: str, i: int | None = None) -> np.ndarray:
        if flavor == "transfer":
            return np.ones(self.tau.shape, bool)
        if flavor == "plus":
            return self.plus()
        if flavor == "minus":
            return ~self.plus()
        if flavor == "boundary":
            if i is None or not 1 <= i <= self.orbit.n:
                raise ValueError(f"boundary flavor needs an index in [1, {self.orbit.n}], got {i}")
            return self.boundary_all()[:, :, i - 1]
        raise ValueError(f"unknown flavor {flavor!r}")

    def rows(self, flavor: str, i: int | None = None):
        mask = self.mask(flavor, i)
        s_idx, c_idx = np.nonzero(mask)
        amps = self.state.amps[s_idx] * self.scale
        return reduce_rows(self.keys[s_idx, c_idx], amps)

    def query_gain_rows(self):
        dims = self.state.dims
        if dims is None:
            raise ValueError("the query gain needs algorithm dimensions")
        gate = self.boundary_all()[:, :, dims.index_i - 1]
        s_idx, c_idx = np.nonzero(gate.any(axis=2))
        amps = self.state.amps[s_idx] * gate[s_idx, c_idx] * self.scale
        return reduce_rows(self.keys[s_idx, c_idx], amps)


def _member_ids(orbit: PartitionOrbit, member) -> tuple[np.ndarray, float]:
    if member is None:
        return np.arange(len(orbit), dtype=np.int64), 1 / np.sqrt(len(orbit))
    mid = member if isinstance(member, (int, np.integer)) else orbit.member_id(member)
    return np.array([mid], dtype=np.int64), 1.0


def chunk_step(state: FourierState, orbit: PartitionOrbit, budget: int = CHUNK_BUDGET) -> int:
    """Members per chunk so one chunk's tables stay near ``budget`` entries."""
    per_member = max(1, state.codes.size) * max(state.width, orbit.num_blocks, orbit.n)
    return max(1, budget // per_member)


def pushforwards(
    state: FourierState, orbit: PartitionOrbit, member=None, budget: int = CHUNK_BUDGET, step: int | None = None
) -> Iterator[Pushforward]:
    """Chunked pushforwards in member order; a single member skips the 1/sqrt|M| weight.

    Pass ``step`` to align the chunks of several states.
    """
    ids, scale = _member_ids(orbit, member)
    if step is None:
        step = chunk_step(state, orbit, budget)
    for start in range(0, ids.size, step):
        yield Pushforward(state, orbit, ids[start : start + step], scale)


def _assemble(state: FourierState, orbit: PartitionOrbit, pieces) -> YState:
    keys, amps = [], []
    for k, a in pieces:
        keys.append(k)
        amps.append(a)
    if not keys:
        return empty_y(orbit, state.q, state.width, state.dims)
    return YState(orbit, state.q, np.concatenate(keys), np.concatenate(amps, axis=0), state.dims)


def apply_transfer(state: FourierState, orbit: PartitionOrbit, member=None) -> YState:
    """Upsilon; with ``member`` given, the single-member Upsilon_mu (no orbit weight)."""
    return _assemble(state, orbit, (p.rows("transfer") for p in pushforwards(state, orbit, member)))


def apply_knowledge(state: FourierState, orbit: PartitionOrbit, flavor: str, i: int | None = None, member=None) -> YState:
    """Upsilon restricted to supp(sigma) in L^flavor_mu; flavor is plus, minus, boundary (with i) or transfer."""
    if flavor not in FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}")
    if flavor == "boundary" and (i is None or not 1 <= i <= orbit.n):
        raise ValueError(f"boundary flavor needs an index in [1, {orbit.n}], got {i}")
    return _assemble(state, orbit, (p.rows(flavor, i) for p in pushforwards(state, orbit, member)))


def apply_query_gain(state: FourierState, orbit: PartitionOrbit, member=None) -> YState:
    """Psi^boundary: each column (i, c, w) uses the boundary flavor of its own i."""
    return _assemble(state, orbit, (p.query_gain_rows() for p in pushforwards(state, orbit, member)))


def _require_dims(y: YState) -> ProblemDims:
    if y.dims is None:
        raise ValueError("operation needs algorithm dimensions")
    return y.dims


def apply_xi(y: YState) -> YState:
    """Keep entries whose queried index lies in the member's highlighted block."""
    dims = _require_dims(y)
    if not y.orbit.highlighted:
        raise ValueError("the query profile needs a highlighted orbit")
    hmask = y.orbit.highlight_masks[y.member_ids]
    keep = (hmask[:, None] >> (dims.index_i[None, :] - 1)) & 1
    return y._like(*prune_rows(y.keys, y.amps * keep))


def _tau_digit_shift(y: YState, block_pos: np.ndarray, c) -> np.ndarray:
    q = y.q
    pw = powers_of(q, y.orbit.num_blocks)
    place = pw[block_pos]
    digit = (y.tau_codes.reshape(-1, *([1] * (block_pos.ndim - 1))) // place) % q
    return ((digit + c) % q - digit) * place


def apply_oracle_Y(y: YState) -> YState:
    """tau(Block(i)) += c for every column (i, c, w)."""
    dims = _require_dims(y)
    if y.keys.size == 0:
        return y
    block_pos = y.orbit.labels[y.member_ids][:, dims.index_i - 1]
    new_keys = y.keys[:, None] + _tau_digit_shift(y, block_pos, dims.index_c[None, :])
    return y._like(*scatter_columns(new_keys, y.amps))


def apply_phase_shift_Y(y: YState, i: int, c: int) -> YState:
    """O_{i,c} on Y: tau(Block(i)) += c for every row."""
    if y.keys.size == 0:
        return y
    block_pos = y.orbit.labels[y.member_ids, i - 1]
    keys = y.keys + _tau_digit_shift(y, block_pos, c)
    order = np.argsort(keys)
    return y._like(keys[order], y.amps[order])


# ---------------------------------------------------------------- responses


def _as_mask(rho) -> int:
    if isinstance(rho, (int, np.integer)):
        return int(rho)
    return to_mask(rho)


def members_containing(orbit: PartitionOrbit, rho) -> np.ndarray:
    """Boolean mask of the members with a block covering rho."""
    r = _as_mask(rho)
    return ((orbit.block_masks & r) == r).any(axis=1)


class ResponseSet:
    """All k-subsets of [n] with the member sets M_rho."""

    def __init__(self, orbit: PartitionOrbit, k: int | None = None):
        self.orbit = orbit
        self.k = orbit.k if k is None else k
        self.responses = k_subsets(orbit.n, self.k)
        self._index = {r: j for j, r in enumerate(self.responses)}

    def __len__(self) -> int:
        return len(self.responses)

    def as_sets(self) -> list[frozenset[int]]:
        return [frozenset(from_mask(r)) for r in self.responses]

    def index(self, rho) -> int:
        r = _as_mask(rho)
        if r not in self._index:
            raise KeyError(f"{from_mask(r)} is not a response")
        return self._index[r]

    def members(self, rho) -> np.ndarray:
        self.index(rho)
        return members_containing(self.orbit, rho)

    def member_table(self) -> np.ndarray:
        """table[r, m]: member m lies in M_rho for response r."""
        resp = np.array(self.responses, dtype=np.int64)
        bm = self.orbit.block_masks
        return ((bm[None, :, :] & resp[:, None, None]) == resp[:, None, None]).any(axis=2)


def project_response(y: YState, rho, responses: ResponseSet | None = None) -> YState:
    if responses is not None:
        mask = responses.members(rho)
    else:
        if bin(_as_mask(rho)).count("1") != y.orbit.k or _as_mask(rho) >> y.orbit.n:
            raise KeyError(f"{rho} is not a response of {y.orbit.describe()}")
        mask = members_containing(y.orbit, rho)
    return y.restrict(mask)


def success_probability(y: YState, meas: Measurement, responses: ResponseSet) -> float:
    """|| sum_rho (M_rho (x) Pi_rho) y ||^2 by keeping (mu, tau, a) iff mu lies in M_label(a)."""
    if meas.labels.size != y.width:
        raise ValueError("measurement does not act on this register")
    try:
        resp_idx = np.array([responses.index(r) for r in meas.responses], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"labeling range outside the response set: {exc}") from None
    table = responses.member_table()[resp_idx]
    keep = table[meas.labels][:, y.member_ids].T
    return float(np.sum(np.abs(y.amps[keep]) ** 2))
