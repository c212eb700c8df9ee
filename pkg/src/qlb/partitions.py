"""Partitions of [n], highlighted partitions, their orbits and knowledge systems.

Blocks are bitmasks over [n] (bit i-1 stands for element i).  A partition is
kept in canonical form: blocks ordered by their smallest element.
"""
from __future__ import annotations

import itertools
import os
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from math import comb, factorial
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import CapExceeded, HierarchyMismatch, SeedParseError

DEFAULT_MAX_ORBIT = 2_000_000


def max_orbit_cap() -> int:
    value = os.environ.get("QLB_MAX_ORBIT")
    if value is None:
        return DEFAULT_MAX_ORBIT
    try:
        cap = int(value)
    except ValueError as exc:
        raise ValueError(f"QLB_MAX_ORBIT must be an integer, got {value!r}") from exc
    if cap <= 0:
        raise ValueError("QLB_MAX_ORBIT must be positive")
    return cap


def to_mask(elements: Iterable[int]) -> int:
    mask = 0
    for i in elements:
        mask |= 1 << (int(i) - 1)
    return mask


def from_mask(mask: int) -> tuple[int, ...]:
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def lowest(mask: int) -> int:
    return (mask & -mask).bit_length()


def popcount(mask: int) -> int:
    return bin(mask).count("1")


@dataclass(frozen=True)
class Partition:
    n: int
    blocks: tuple[int, ...]

    def __post_init__(self):
        if self.n < 1 or self.n > 62:
            raise ValueError("n must lie in [1, 62]")
        blocks = tuple(sorted(int(b) for b in self.blocks))
        blocks = tuple(sorted(blocks, key=lowest))
        seen = 0
        for b in blocks:
            if b == 0:
                raise ValueError("empty block")
            if b & seen:
                raise ValueError("blocks overlap")
            seen |= b
        if seen != (1 << self.n) - 1:
            raise ValueError("blocks do not cover [n]")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]], n: int | None = None) -> "Partition":
        masks = [to_mask(b) for b in blocks]
        if n is None:
            n = max((max(from_mask(m)) for m in masks if m), default=0)
        return cls(n, tuple(masks))

    def block_sets(self) -> list[tuple[int, ...]]:
        return [from_mask(b) for b in self.blocks]

    def sizes(self) -> tuple[int, ...]:
        return tuple(popcount(b) for b in self.blocks)

    def block_of(self, i: int) -> int:
        """Position of the block holding element i."""
        bit = 1 << (i - 1)
        for pos, b in enumerate(self.blocks):
            if b & bit:
                return pos
        raise ValueError(f"{i} not in [1, {self.n}]")

    def permute(self, perm: Sequence[int]) -> "Partition":
        """Image under the permutation sending element i to perm[i-1]."""
        return Partition(self.n, tuple(to_mask(perm[i - 1] for i in from_mask(b)) for b in self.blocks))

    def text(self) -> str:
        return "/".join(",".join(map(str, blk)) for blk in self.block_sets())

    def __str__(self) -> str:
        return self.text()


@dataclass(frozen=True)
class HighlightedPartition:
    partition: Partition
    highlighted: int

    def __post_init__(self):
        if not 0 <= self.highlighted < len(self.partition.blocks):
            raise ValueError("highlighted index out of range")

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]], highlighted: Iterable[int], n: int | None = None) -> "HighlightedPartition":
        part = Partition.from_blocks(blocks, n)
        mask = to_mask(highlighted)
        if mask not in part.blocks:
            raise ValueError("highlighted set is not a block")
        return cls(part, part.blocks.index(mask))

    @classmethod
    def with_mask(cls, partition: Partition, mask: int) -> "HighlightedPartition":
        return cls(partition, partition.blocks.index(mask))

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def blocks(self) -> tuple[int, ...]:
        return self.partition.blocks

    @property
    def highlighted_block(self) -> int:
        return self.partition.blocks[self.highlighted]

    def sizes(self) -> tuple[int, ...]:
        return self.partition.sizes()

    def block_of(self, i: int) -> int:
        return self.partition.block_of(i)

    def permute(self, perm: Sequence[int]) -> "HighlightedPartition":
        image = self.partition.permute(perm)
        mask = to_mask(perm[i - 1] for i in from_mask(self.highlighted_block))
        return HighlightedPartition.with_mask(image, mask)

    def text(self) -> str:
        parts = []
        for pos, blk in enumerate(self.partition.block_sets()):
            s = ",".join(map(str, blk))
            parts.append("*" + s if pos == self.highlighted else s)
        return "/".join(parts)

    def __str__(self) -> str:
        return self.text()


AnyPartition = Partition | HighlightedPartition


def parse_seed(text: str) -> AnyPartition:
    """Parse ``"*1,2,3/4/5,6"``; a leading ``*`` marks the highlighted block."""
    if not isinstance(text, str) or not text.strip():
        raise SeedParseError("empty seed")
    blocks: list[list[int]] = []
    marked: list[int] = []
    for pos, raw in enumerate(text.strip().split("/")):
        raw = raw.strip()
        if raw.startswith("*"):
            marked.append(pos)
            raw = raw[1:]
        if not raw:
            raise SeedParseError(f"empty block at position {pos} in {text!r}")
        try:
            elems = [int(tok) for tok in raw.split(",")]
        except ValueError as exc:
            raise SeedParseError(f"bad element list {raw!r} in {text!r}") from exc
        blocks.append(elems)
    flat = [e for b in blocks for e in b]
    if len(flat) != len(set(flat)):
        raise SeedParseError(f"repeated element in {text!r}")
    n = max(flat)
    if min(flat) < 1 or sorted(flat) != list(range(1, n + 1)):
        raise SeedParseError(f"blocks of {text!r} must cover 1..{n} exactly")
    if len(marked) > 1:
        raise SeedParseError("at most one block may be highlighted")
    try:
        part = Partition.from_blocks(blocks, n)
    except ValueError as exc:
        raise SeedParseError(str(exc)) from exc
    if marked:
        return HighlightedPartition.with_mask(part, to_mask(blocks[marked[0]]))
    return part


def canonical(mu: AnyPartition) -> AnyPartition:
    if isinstance(mu, HighlightedPartition):
        part = Partition(mu.n, mu.blocks)
        return HighlightedPartition.with_mask(part, mu.highlighted_block)
    return Partition(mu.n, mu.blocks)


def split_off(mu: HighlightedPartition, i: int) -> HighlightedPartition:
    hb = mu.highlighted_block
    bit = 1 << (i - 1)
    if not hb & bit:
        raise ValueError(f"{i} is not in the highlighted block {from_mask(hb)}")
    if popcount(hb) < 2:
        raise ValueError("cannot split a highlighted singleton")
    rest = [b for b in mu.blocks if b != hb]
    part = Partition(mu.n, tuple(rest + [hb & ~bit, bit]))
    return HighlightedPartition.with_mask(part, hb & ~bit)


def unhighlight(mu: HighlightedPartition) -> Partition:
    return mu.partition


# ---------------------------------------------------------------- knowledge


@dataclass(frozen=True)
class KnowledgeSystem:
    """``kind`` is "intersection" (some block meets S in >= k elements) or "highlighted" (S covers the highlighted block)."""

    kind: str
    k: int = 0

    def __post_init__(self):
        if self.kind not in ("intersection", "highlighted"):
            raise ValueError(f"unknown knowledge flavor {self.kind!r}")
        if self.kind == "intersection" and self.k < 1:
            raise ValueError("intersection flavor needs k >= 1")

    @classmethod
    def intersection(cls, k: int) -> "KnowledgeSystem":
        return cls("intersection", k)

    @classmethod
    def highlighted(cls) -> "KnowledgeSystem":
        return cls("highlighted")


def _subset_mask(S) -> int:
    return S if isinstance(S, (int, np.integer)) else to_mask(S)


def knowledge_contains(sys: KnowledgeSystem, mu: AnyPartition, S) -> bool:
    """Whether S lies in L+ of mu."""
    S = _subset_mask(S)
    if sys.kind == "highlighted":
        if not isinstance(mu, HighlightedPartition):
            raise TypeError("highlighted flavor needs a highlighted partition")
        hb = mu.highlighted_block
        return S & hb == hb
    return any(popcount(S & b) >= sys.k for b in mu.blocks)


def boundary_contains(sys: KnowledgeSystem, mu: AnyPartition, S, i: int) -> bool:
    S = _subset_mask(S)
    return not knowledge_contains(sys, mu, S) and knowledge_contains(sys, mu, S | (1 << (i - 1)))


# ------------------------------------------------------------------- orbits


def _enumerate(n: int, types: list[tuple[int, bool]], counts: list[int], cap: int) -> Iterator[tuple[list[int], int]]:
    """Yield (blocks, highlighted mask) for every partition of the given type.

    The smallest unassigned element always opens the next block, and blocks
    are grouped by (size, highlighted) type, so every partition is produced
    exactly once.
    """
    full = (1 << n) - 1
    blocks: list[int] = []
    hl = [0]
    produced = [0]

    def rec(used: int):
        if used == full:
            produced[0] += 1
            if produced[0] > cap:
                raise CapExceeded(f"orbit exceeds the cap of {cap} members")
            yield list(blocks), hl[0]
            return
        first = lowest(~used & full)
        free = [e for e in range(first + 1, n + 1) if not used >> (e - 1) & 1]
        for t, (size, is_hl) in enumerate(types):
            if counts[t] == 0:
                continue
            counts[t] -= 1
            for rest in itertools.combinations(free, size - 1):
                b = to_mask((first,) + rest)
                blocks.append(b)
                if is_hl:
                    hl[0] = b
                yield from rec(used | b)
                blocks.pop()
            counts[t] += 1

    yield from rec(0)


def orbit_size(seed: AnyPartition) -> int:
    """Closed-form orbit size n! / prod(|B|!) / prod(multiplicities!)."""
    sizes = seed.sizes()
    denom = 1
    for s in sizes:
        denom *= factorial(s)
    types = Counter(sizes)
    if isinstance(seed, HighlightedPartition):
        hs = popcount(seed.highlighted_block)
        types[hs] -= 1
        types[("h", hs)] = 1
    for m in types.values():
        denom *= factorial(m)
    return factorial(seed.n) // denom


class PartitionOrbit:
    """S_n orbit of a seed with uniform weights, in canonical sorted order."""

    def __init__(self, seed: AnyPartition, knowledge: KnowledgeSystem | None = None, cap: int | None = None):
        cap = max_orbit_cap() if cap is None else cap
        if cap <= 0:
            raise ValueError("orbit cap must be positive")
        expected = orbit_size(seed)
        if expected > cap:
            raise CapExceeded(f"orbit of {seed} has {expected} members, cap is {cap}")
        self.seed = canonical(seed)
        self.n = seed.n
        self.highlighted = isinstance(seed, HighlightedPartition)
        if knowledge is None and self.highlighted:
            knowledge = KnowledgeSystem.highlighted()
        if knowledge is not None and knowledge.kind == "highlighted" and not self.highlighted:
            raise ValueError("highlighted flavor needs a highlighted seed")
        self.knowledge = knowledge

        sizes = Counter(seed.sizes())
        types: list[tuple[int, bool]] = []
        counts: list[int] = []
        if self.highlighted:
            hs = popcount(seed.highlighted_block)
            sizes[hs] -= 1
            types.append((hs, True))
            counts.append(1)
        for s in sorted(sizes):
            if sizes[s]:
                types.append((s, False))
                counts.append(sizes[s])
        members = []
        for blocks, hmask in _enumerate(self.n, types, counts, cap):
            part = Partition(self.n, tuple(blocks))
            members.append(HighlightedPartition.with_mask(part, hmask) if self.highlighted else part)
        members.sort(key=_sort_key)
        self.members: list[AnyPartition] = members
        self._index = {m: j for j, m in enumerate(members)}

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, mu) -> bool:
        return canonical(mu) in self._index

    @property
    def probability(self) -> float:
        return 1.0 / len(self.members)

    def member_id(self, mu: AnyPartition) -> int:
        try:
            return self._index[canonical(mu)]
        except KeyError:
            raise KeyError(f"{mu} is not in the orbit") from None

    @property
    def num_blocks(self) -> int:
        return len(self.seed.blocks)

    @property
    def k(self) -> int:
        """Size of the answer sets for this orbit's equal-elements problem."""
        if self.knowledge is not None and self.knowledge.kind == "intersection":
            return self.knowledge.k
        if self.highlighted:
            return popcount(self.seed.highlighted_block)
        return max(self.seed.sizes())

    def describe(self) -> str:
        flavor = "none" if self.knowledge is None else self.knowledge.kind + (f"({self.knowledge.k})" if self.knowledge.k else "")
        return f"orbit[{self.seed.text()}; {flavor}; |M|={len(self)}]"

    # numpy tables used by the vectorised operators

    @cached_property
    def block_masks(self) -> np.ndarray:
        return np.array([m.blocks for m in self.members], dtype=np.int64).reshape(len(self), self.num_blocks)

    @cached_property
    def labels(self) -> np.ndarray:
        """labels[m, i-1] = position of the block of member m holding element i."""
        bits = 1 << np.arange(self.n, dtype=np.int64)
        hit = (self.block_masks[:, :, None] & bits[None, None, :]) != 0
        return hit.argmax(axis=1).astype(np.int64)

    @cached_property
    def block_sizes(self) -> np.ndarray:
        return np.array([m.sizes() for m in self.members], dtype=np.int64).reshape(len(self), self.num_blocks)

    @cached_property
    def highlight_pos(self) -> np.ndarray:
        if not self.highlighted:
            return np.full(len(self), -1, dtype=np.int64)
        return np.array([m.highlighted for m in self.members], dtype=np.int64)

    @cached_property
    def highlight_masks(self) -> np.ndarray:
        if not self.highlighted:
            return np.zeros(len(self), dtype=np.int64)
        return np.array([m.highlighted_block for m in self.members], dtype=np.int64)


def _sort_key(mu: AnyPartition):
    if isinstance(mu, HighlightedPartition):
        return (mu.blocks, mu.highlighted)
    return (mu.blocks, -1)


def orbit_of(seed: AnyPartition | str, knowledge: KnowledgeSystem | None = None, cap: int | None = None) -> PartitionOrbit:
    if isinstance(seed, str):
        seed = parse_seed(seed)
    return PartitionOrbit(seed, knowledge, cap)


# ---------------------------------------------------------------- hierarchy


def kdist_seed(n: int, k: int, singletons: int | None = None) -> HighlightedPartition:
    """Highlighted k-block on 1..k followed by blocks of every size below k.

    Without ``singletons`` the remaining elements are shared evenly: equally
    many blocks of each size 1..k-1, with the remainder as extra singletons.
    With ``singletons`` given, exactly that many singletons are used and the
    rest is filled with blocks of sizes k-1, ..., 2 in turn.
    """
    if k < 2 or n < k:
        raise ValueError("need 2 <= k <= n")
    rest = n - k
    sizes: list[int] = []
    if singletons is None:
        per = rest // (k * (k - 1) // 2)
        for size in range(k - 1, 0, -1):
            sizes += [size] * per
        sizes += [1] * (rest - per * (k * (k - 1) // 2))
    else:
        if not 0 <= singletons <= rest:
            raise ValueError("singleton count out of range")
        left = rest - singletons
        cycle = list(range(k - 1, 1, -1))
        j = 0
        while left >= 2 and cycle:
            s = min(cycle[j % len(cycle)], left)
            sizes.append(s)
            left -= s
            j += 1
        if left:
            raise ValueError("cannot fill the non-singleton part with blocks of size 2..k-1")
        sizes += [1] * singletons
    blocks = [list(range(1, k + 1))]
    nxt = k + 1
    for s in sizes:
        blocks.append(list(range(nxt, nxt + s)))
        nxt += s
    return HighlightedPartition.from_blocks(blocks, blocks[0], n)


def ed_orbit(n: int, cap: int | None = None) -> PartitionOrbit:
    """Element-distinctness orbit: one pair plus singletons, intersection flavor with k = 2."""
    seed = Partition.from_blocks([[1, 2]] + [[i] for i in range(3, n + 1)], n)
    return PartitionOrbit(seed, KnowledgeSystem.intersection(2), cap)


def singleton_rich_orbit(n: int, k: int, cap: int | None = None) -> PartitionOrbit:
    """One k-block plus n-k singletons, intersection flavor with threshold k."""
    seed = Partition.from_blocks([list(range(1, k + 1))] + [[i] for i in range(k + 1, n + 1)], n)
    return PartitionOrbit(seed, KnowledgeSystem.intersection(k), cap)


@dataclass
class Hierarchy:
    """Levels M_k, ..., M_1 of highlighted orbits and the unhighlighted M_o1..M_o(k-1)."""

    k: int
    seeds: dict[int, HighlightedPartition]
    levels: dict[int, PartitionOrbit]
    plain: dict[int, PartitionOrbit]

    @property
    def n(self) -> int:
        return self.seeds[self.k].n


def build_hierarchy(seed: HighlightedPartition | str, cap: int | None = None) -> Hierarchy:
    """mu_{l-1} = split_off(mu_l, max element of the highlighted block); mu_o_l = unhighlight(mu_l)."""
    if isinstance(seed, str):
        seed = parse_seed(seed)
    if not isinstance(seed, HighlightedPartition):
        raise HierarchyMismatch("a hierarchy seed needs a highlighted block")
    k = popcount(seed.highlighted_block)
    seeds = {k: canonical(seed)}
    for level in range(k, 1, -1):
        mu = seeds[level]
        seeds[level - 1] = split_off(mu, max(from_mask(mu.highlighted_block)))
    levels = {l: PartitionOrbit(s, KnowledgeSystem.highlighted(), cap) for l, s in seeds.items()}
    plain = {l: PartitionOrbit(unhighlight(seeds[l]), None, cap) for l in range(1, k)}
    return Hierarchy(k, seeds, levels, plain)


def check_hierarchy(h: Hierarchy) -> None:
    """Raise HierarchyMismatch unless consecutive seeds are related by split_off / unhighlight."""
    for level in range(h.k, 1, -1):
        upper = h.seeds[level]
        lower = h.levels[level - 1]
        if not any(split_off(upper, i) in lower for i in from_mask(upper.highlighted_block)):
            raise HierarchyMismatch(f"level {level - 1} is not a split of level {level}")
    for level, orbit in h.plain.items():
        if unhighlight(h.seeds[level]) not in orbit:
            raise HierarchyMismatch(f"plain level {level} does not match highlighted level {level}")


@dataclass(frozen=True)
class OrbitRatios:
    n: int
    sizes: dict[int, int]
    plain_sizes: dict[int, int]
    level_ratios: dict[int, float]
    highlight_ratios: dict[int, float]


def verify_orbit_ratios(h: Hierarchy) -> OrbitRatios:
    """|M_{l+1}|/|M_l| and |M_l|/|M_o_l| for a hierarchy."""
    check_hierarchy(h)
    sizes = {l: len(o) for l, o in h.levels.items()}
    plain = {l: len(o) for l, o in h.plain.items()}
    level_ratios = {l: sizes[l + 1] / sizes[l] for l in range(1, h.k)}
    highlight_ratios = {l: sizes[l] / plain[l] for l in range(1, h.k)}
    return OrbitRatios(h.n, sizes, plain, level_ratios, highlight_ratios)


def k_subsets(n: int, k: int) -> list[int]:
    """All k-subsets of [n] as bitmasks, in lexicographic order of their elements."""
    return [to_mask(c) for c in itertools.combinations(range(1, n + 1), k)]


def count_blocks_of_size(mu: AnyPartition, size: int) -> int:
    return sum(1 for s in mu.sizes() if s == size)

