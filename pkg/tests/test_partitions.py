import itertools
from math import comb

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlb.errors import CapExceeded, HierarchyMismatch, SeedParseError
from qlb.partitions import (
    Hierarchy,
    HighlightedPartition,
    KnowledgeSystem,
    Partition,
    PartitionOrbit,
    boundary_contains,
    build_hierarchy,
    canonical,
    check_hierarchy,
    ed_orbit,
    from_mask,
    kdist_seed,
    knowledge_contains,
    orbit_of,
    orbit_size,
    parse_seed,
    singleton_rich_orbit,
    split_off,
    to_mask,
    unhighlight,
    verify_orbit_ratios,
)


def brute_force_orbit(seed) -> set:
    """Every image of the seed under all n! permutations, canonicalized."""
    n = seed.n
    return {canonical(seed.permute(perm)) for perm in itertools.permutations(range(1, n + 1))}


def test_permute_convention():
    mu = parse_seed("1,2/3")
    assert mu.permute((2, 3, 1)).text() == "1/2,3"


@st.composite
def partitions(draw, max_n=7, highlighted=None):
    n = draw(st.integers(1, max_n))
    labels = draw(st.lists(st.integers(0, n - 1), min_size=n, max_size=n))
    groups: dict[int, list[int]] = {}
    for e, lab in enumerate(labels, start=1):
        groups.setdefault(lab, []).append(e)
    part = Partition.from_blocks(groups.values(), n)
    hl = draw(st.booleans()) if highlighted is None else highlighted
    if hl:
        block = draw(st.sampled_from(part.blocks))
        return HighlightedPartition.with_mask(part, block)
    return part


@given(partitions())
def test_partition_is_a_set_partition(mu):
    union = 0
    for b in mu.blocks:
        assert b and not union & b
        union |= b
    assert union == (1 << mu.n) - 1


@given(partitions())
def test_canonical_is_idempotent_and_text_roundtrips(mu):
    assert canonical(canonical(mu)) == canonical(mu)
    assert parse_seed(mu.text()) == canonical(mu)


@pytest.mark.parametrize("text", ["", "1,2//3", "1,2/2", "1,3", "*1/*2", "1,a/2", "0,1"])
def test_parse_seed_rejects_malformed(text):
    with pytest.raises(SeedParseError):
        parse_seed(text)


def test_parse_seed_highlight():
    mu = parse_seed("3/*1,2/4")
    assert isinstance(mu, HighlightedPartition)
    assert from_mask(mu.highlighted_block) == (1, 2)
    assert mu.text() == "*1,2/3/4"


@pytest.mark.parametrize(
    "seed,size",
    [("*1,2/3/4", 6), ("*1/2/3/4", 4), ("1/2/3/4", 1), ("1,2/3/4", 6), ("*1,2,3/4,5/6,7/8/9", 3780), ("1,2,3/4,5/6,7/8/9", 3780), ("1,2/3/4,5/6,7/8/9", 1260)],
)
def test_orbit_sizes(seed, size):
    orbit = orbit_of(seed)
    assert len(orbit) == size == orbit_size(orbit.seed)


@settings(max_examples=40, deadline=None)
@given(partitions(max_n=6))
def test_orbit_matches_brute_force_enumeration(seed):
    orbit = PartitionOrbit(seed)
    assert set(orbit.members) == brute_force_orbit(seed)
    assert len(orbit.members) == len(set(orbit.members)) == orbit_size(seed)


def test_orbit_is_closed_under_permutations(rng):
    orbit = orbit_of("*1,2,3/4,5/6,7/8/9")
    sizes = sorted(orbit.seed.sizes())
    for mu in orbit.members[:: max(1, len(orbit) // 40)]:
        assert sorted(mu.sizes()) == sizes
        assert len(from_mask(mu.highlighted_block)) == 3
        for _ in range(5):
            perm = tuple(int(v) for v in rng.permutation(9) + 1)
            assert mu.permute(perm) in orbit


def test_orbit_members_sorted_and_indexed():
    orbit = ed_orbit(5)
    ids = [orbit.member_id(mu) for mu in orbit.members]
    assert ids == list(range(len(orbit)))
    assert orbit.probability == pytest.approx(1 / comb(5, 2))


def test_orbit_cap(monkeypatch):
    with pytest.raises(CapExceeded):
        orbit_of("1,2/3/4", cap=5)
    monkeypatch.setenv("QLB_MAX_ORBIT", "3")
    with pytest.raises(CapExceeded):
        orbit_of("1,2/3/4")


def test_split_off_examples():
    mu = parse_seed("*1,2,3/4")
    out = split_off(mu, 3)
    assert out.text() == "*1,2/3/4"
    assert len(unhighlight(out).blocks) == len(mu.blocks) + 1
    assert split_off(parse_seed("*1,2/3"), 2).text() == "*1/2/3"
    with pytest.raises(ValueError):
        split_off(mu, 4)
    with pytest.raises(ValueError):
        split_off(parse_seed("*1/2"), 1)


@given(partitions(max_n=7, highlighted=True), st.data())
def test_split_off_bookkeeping(mu, data):
    hb = from_mask(mu.highlighted_block)
    if len(hb) < 2:
        return
    i = data.draw(st.sampled_from(hb))
    out = split_off(mu, i)
    assert len(out.blocks) == len(mu.blocks) + 1
    assert len(from_mask(out.highlighted_block)) == len(hb) - 1
    assert sorted(unhighlight(mu).sizes()) == sorted(mu.sizes())


def test_highlighted_orbit_size_ratio():
    for text in ["*1,2/3/4", "*1,2/3,4/5", "*1,2,3/4,5/6,7/8/9", "*1/2/3/4,5"]:
        mu = parse_seed(text)
        hsize = len(from_mask(mu.highlighted_block))
        same = sum(1 for s in mu.sizes() if s == hsize)
        assert len(orbit_of(mu)) == len(orbit_of(unhighlight(mu))) * same


def test_knowledge_examples():
    hl = KnowledgeSystem.highlighted()
    mu = HighlightedPartition.from_blocks([[1, 2], [3], [4], [5]], [1, 2])
    assert knowledge_contains(hl, mu, {1, 2, 5})
    inter = KnowledgeSystem.intersection(2)
    nu = Partition.from_blocks([[1, 2, 3], [4]])
    assert knowledge_contains(inter, nu, {2, 3})
    for sys, m in [(hl, mu), (inter, nu)]:
        assert not knowledge_contains(sys, m, set())
    assert boundary_contains(hl, mu, {1}, 2)
    for i in range(1, 6):
        assert not boundary_contains(hl, mu, {1, 2}, i)
    big = HighlightedPartition.from_blocks([[1, 2, 3], [4], [5]], [1, 2, 3])
    for i in (4, 5):
        assert not boundary_contains(hl, big, set(), i)


@pytest.mark.parametrize("n", [4, 6, 8])
def test_knowledge_axioms_exhaustive(n):
    systems = [
        (KnowledgeSystem.highlighted(), kdist_seed(n, 2)),
        (KnowledgeSystem.highlighted(), kdist_seed(n, 3)),
        (KnowledgeSystem.intersection(2), unhighlight(kdist_seed(n, 3))),
    ]
    full = 1 << n
    for sys, mu in systems:
        member = [knowledge_contains(sys, mu, S) for S in range(full)]
        assert not member[0]
        for S in range(full):
            if member[S]:
                for e in range(n):
                    assert member[S | (1 << e)]


def test_knowledge_axioms_sampled_large(rng):
    n = 12
    sys = KnowledgeSystem.highlighted()
    mu = kdist_seed(n, 3)
    for _ in range(500):
        S = int(rng.integers(0, 1 << n))
        if knowledge_contains(sys, mu, S):
            assert knowledge_contains(sys, mu, S | int(rng.integers(0, 1 << n)))


def test_kdist_seed_shapes():
    assert kdist_seed(9, 3).text() == "*1,2,3/4,5/6,7/8/9"
    assert kdist_seed(4, 2).text() == "*1,2/3/4"
    assert sorted(kdist_seed(10, 3, singletons=5).sizes()) == [1, 1, 1, 1, 1, 2, 3]
    with pytest.raises(ValueError):
        kdist_seed(4, 3, singletons=5)


def test_singleton_rich_orbit():
    orbit = singleton_rich_orbit(6, 3)
    assert len(orbit) == comb(6, 3)
    assert orbit.k == 3


def test_ed_hierarchy_ratios():
    h = build_hierarchy(kdist_seed(4, 2))
    rep = verify_orbit_ratios(h)
    assert rep.sizes == {2: 6, 1: 4}
    assert rep.level_ratios[1] == pytest.approx(1.5)
    assert rep.plain_sizes[1] == 1
    assert rep.highlight_ratios[1] == 4


def test_hierarchy_ratios_grow_linearly():
    ratios = {n: verify_orbit_ratios(build_hierarchy(kdist_seed(n, 2))).level_ratios[1] for n in (4, 6, 8)}
    assert ratios == {n: (n - 1) / 2 for n in (4, 6, 8)}


def test_three_distinctness_hierarchy_sizes():
    h = build_hierarchy(kdist_seed(9, 3))
    assert {l: len(o) for l, o in h.levels.items()} == {3: 3780, 2: 3780, 1: 1890}
    assert {l: len(o) for l, o in h.plain.items()} == {2: 1260, 1: 378}


def test_hierarchy_mismatch_detected():
    good = build_hierarchy(kdist_seed(6, 3))
    wrong = build_hierarchy(kdist_seed(6, 2))
    broken = Hierarchy(good.k, good.seeds, {**good.levels, 1: orbit_of("*1,2/3/4/5/6")}, good.plain)
    with pytest.raises(HierarchyMismatch):
        check_hierarchy(broken)
    with pytest.raises(HierarchyMismatch):
        build_hierarchy(parse_seed("1,2/3"))
    assert wrong.k == 2


def test_to_from_mask_roundtrip():
    assert from_mask(to_mask([5, 1, 3])) == (1, 3, 5)
