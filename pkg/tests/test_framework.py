import itertools

import numpy as np
import pytest

from qlb.algorithms import constant_measurement, difference_test_algorithm, random_algorithm, random_measurement, sigma_vector
from qlb.analysis.framework import (
    check_measurement_transfer,
    exhaustive_success,
    framework_bound,
    gamma_of_span,
    relaxed_vs_strict,
)
from qlb.analysis.gamma import compute_gamma
from qlb.errors import CapExceeded, RankCollapse
from qlb.fourier import ProblemDims, run_uniform, success_probability_pointwise
from qlb.partitions import KnowledgeSystem, ed_orbit, orbit_of
from qlb.transfer import ResponseSet, apply_knowledge, apply_transfer, success_probability


def strict_success_by_inputs(alg, meas) -> float:
    """Average pointwise success over every x with exactly one equal pair (n = 3)."""
    total, count = 0.0, 0
    for x in itertools.product(range(alg.dims.q), repeat=3):
        pairs = [frozenset({a + 1, b + 1}) for a, b in itertools.combinations(range(3), 2) if x[a] == x[b]]
        if len(pairs) != 1:
            continue
        total += success_probability_pointwise(alg, x, meas, pairs)
        count += 1
    return total / count


def test_framework_bound_arithmetic():
    chk = framework_bound(0.3, 0.1, 0.15)
    assert chk.bound == pytest.approx(0.16)
    assert chk.passed and chk.margin == pytest.approx(0.01)
    assert not framework_bound(0.1, 0.1, 0.05).passed


def test_constant_algorithm_meets_the_bound_with_equality(rng):
    orbit = ed_orbit(4)
    dims = ProblemDims(4, 3, 1)
    responses = ResponseSet(orbit)
    psi = run_uniform(random_algorithm(dims, 0, rng))[-1]
    measured = success_probability(apply_transfer(psi, orbit), constant_measurement(dims, responses.as_sets()), responses)
    gamma = compute_gamma(orbit, "minus", 0, 3).gamma
    assert measured == pytest.approx(1 / 6, abs=1e-12)
    assert framework_bound(gamma, 0.0, measured).bound == pytest.approx(measured, abs=1e-12)


def test_random_algorithms_respect_the_bound(rng):
    orbit = ed_orbit(4)
    dims = ProblemDims(4, 3, 1)
    responses = ResponseSet(orbit)
    for T in (1, 2):
        gamma = compute_gamma(orbit, "minus", T, 3).gamma
        for _ in range(5):
            psi = run_uniform(random_algorithm(dims, T, rng))[-1]
            meas = random_measurement(dims, responses.as_sets(), rng)
            measured = success_probability(apply_transfer(psi, orbit), meas, responses)
            delta = apply_knowledge(psi, orbit, "plus").norm()
            assert framework_bound(gamma, delta, measured).passed


def test_measurement_transfer(rng):
    orbit = ed_orbit(4)
    report = compute_gamma(orbit, "minus", 2, 3)
    res = check_measurement_transfer(orbit, "minus", report, ProblemDims(4, 3, 2), 30, rng)
    assert res.passed and 0 < res.worst_ratio


def ed_phi(n, q):
    return sigma_vector(n, q, [({1: v, 2: -v}, 1.0) for v in range(q)])


def test_span_gamma_separates_transfer_from_minus():
    orbit = ed_orbit(4)
    phi = ed_phi(4, 25)
    transfer = gamma_of_span(orbit, "transfer", [phi], 25)
    minus = gamma_of_span(orbit, "minus", [phi], 25)
    assert transfer.gamma > 0.5 >= minus.gamma
    assert transfer.method == "span" and transfer.rank == 1 and transfer.t == 2
    assert transfer.gamma == pytest.approx(0.9128709291752769, abs=1e-9)
    assert minus.gamma == pytest.approx(0.4454354031, abs=1e-9)


def test_span_gamma_matches_compute_gamma_on_full_basis():
    from qlb.analysis.gamma import sigma_basis
    from qlb.fourier import FourierState

    orbit = ed_orbit(4)
    basis = [FourierState(4, 3, np.array([c]), np.ones((1, 1))) for c in sigma_basis(4, 3, 2)]
    assert gamma_of_span(orbit, "minus", basis, 3).gamma == pytest.approx(compute_gamma(orbit, "minus", 2, 3).gamma, abs=1e-9)


def test_span_gamma_errors():
    orbit = orbit_of("1,2", KnowledgeSystem.intersection(2))
    known = sigma_vector(2, 3, [({1: 1, 2: 2}, 1.0)])
    with pytest.raises(RankCollapse):
        gamma_of_span(orbit, "minus", [known], 3)
    with pytest.raises(ValueError):
        gamma_of_span(orbit, "plus", [known], 3)
    with pytest.raises(ValueError):
        gamma_of_span(orbit, "minus", [], 3)


@pytest.mark.parametrize("q", [3, 4, 16])
def test_difference_algorithm_closed_forms(q):
    alg, meas = difference_test_algorithm(3, q)
    res = relaxed_vs_strict(alg, ed_orbit(3), meas)
    assert res.p_strict == pytest.approx(2 / 3, abs=1e-12)
    assert res.p_relaxed == pytest.approx((2 - 1 / q) / 3, abs=1e-12)
    assert res.p_collision == pytest.approx(1 / q, abs=1e-15)
    assert res.ratio == pytest.approx(2 * q / (2 * q - 1), abs=1e-12)
    assert res.passed


def test_strict_success_matches_per_input_simulation():
    alg, meas = difference_test_algorithm(3, 5)
    assert relaxed_vs_strict(alg, ed_orbit(3), meas).p_strict == pytest.approx(strict_success_by_inputs(alg, meas), abs=1e-12)


def test_random_algorithm_strict_success_matches_per_input_simulation(rng):
    dims = ProblemDims(3, 3, 2)
    alg = random_algorithm(dims, 2, rng)
    meas = random_measurement(dims, ResponseSet(ed_orbit(3)).as_sets(), rng)
    res = relaxed_vs_strict(alg, ed_orbit(3), meas)
    assert res.p_strict == pytest.approx(strict_success_by_inputs(alg, meas), abs=1e-12)
    assert res.passed


@pytest.mark.parametrize("n,q,T", [(3, 3, 2), (4, 4, 2), (4, 3, 1)])
def test_y_side_success_matches_exhaustive_simulation(rng, n, q, T):
    orbit = ed_orbit(n)
    dims = ProblemDims(n, q, 1)
    responses = ResponseSet(orbit)
    alg = random_algorithm(dims, T, rng)
    meas = random_measurement(dims, responses.as_sets(), rng)
    y = apply_transfer(run_uniform(alg)[-1], orbit)
    assert success_probability(y, meas, responses) == pytest.approx(exhaustive_success(alg, orbit, meas), abs=1e-12)


def test_relaxed_vs_strict_guards():
    alg, meas = difference_test_algorithm(3, 3)
    with pytest.raises(CapExceeded):
        relaxed_vs_strict(alg, ed_orbit(3), meas, cap=5)
    small, small_meas = difference_test_algorithm(4, 2)
    with pytest.raises(ValueError):
        relaxed_vs_strict(small, ed_orbit(4), small_meas)
    with pytest.raises(ValueError):
        relaxed_vs_strict(alg, ed_orbit(4), meas)
