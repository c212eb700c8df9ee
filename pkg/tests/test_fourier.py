import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlb.algorithms import constant_algorithm, random_algorithm, random_measurement, random_state, random_unitary
from qlb.fourier import (
    FourierState,
    Measurement,
    PhaseFunction,
    ProblemDims,
    QueryAlgorithm,
    all_inputs,
    apply_oracle,
    apply_phase_shift,
    apply_unitary,
    fourier_from_inputs,
    omega,
    project_Xle,
    run_uniform,
    simulate_inputs,
    standard_basis_simulate,
    success_probability_pointwise,
    uniform_initial_state,
)

from conftest import max_abs_diff


def naive_oracle(state: FourierState) -> dict:
    """Entry-by-entry oracle on the dict form: (sigma, (i, c, w)) -> (sigma + {i -> c}, same a)."""
    dims = state.dims
    out: dict = {}
    for sigma, a, amp in state.entries():
        i, c, _ = dims.decode(a)
        key = (sigma.shifted(i, c, dims.q), a)
        out[key] = out.get(key, 0) + amp
    return {k: v for k, v in out.items() if abs(v) > 1e-14}


dims_strategy = st.builds(
    ProblemDims,
    n=st.integers(1, 5),
    q=st.integers(2, 6),
    dimW=st.integers(1, 3),
)


@given(dims_strategy, st.data())
def test_alg_index_layout_roundtrip(dims, data):
    a = data.draw(st.integers(0, dims.dim_a - 1))
    i, c, w = dims.decode(a)
    assert dims.index(i, c, w) == a
    assert a == ((i - 1) * dims.q + c) * dims.dimW + w
    assert dims.index_i[a] == i and dims.index_c[a] == c


def test_dim_a_is_product():
    assert ProblemDims(3, 5, 2).dim_a == 30


@pytest.mark.parametrize("bad", [dict(n=0, q=3), dict(n=2, q=1), dict(n=2, q=3, dimW=0)])
def test_problem_dims_rejects_degenerate(bad):
    with pytest.raises(ValueError):
        ProblemDims(**bad)


@given(st.integers(1, 6), st.integers(2, 7), st.data())
def test_phase_function_code_roundtrip(n, q, data):
    code = data.draw(st.integers(0, q**n - 1))
    sigma = PhaseFunction.decode(code, n, q)
    assert sigma.encode(n, q) == code
    assert all(v != 0 for _, v in sigma.entries)
    assert len(sigma) == len(sigma.support)


def test_phase_function_drops_zero_values():
    sigma = PhaseFunction.from_mapping({1: 5, 2: 3}, 5)
    assert sigma.entries == ((2, 3),)
    assert str(sigma) == "2->3"
    assert str(PhaseFunction()) == "{}"


def test_omega_reduces_exponent_first():
    assert omega(7, 5) == omega(2, 5)
    assert abs(omega(10**12 + 1, 4) - 1j) < 1e-15


def test_uniform_initial_state_examples():
    dims = ProblemDims(3, 5, 1)
    psi = uniform_initial_state(dims)
    assert psi.codes.tolist() == [0]
    assert psi.norm() == pytest.approx(1.0)
    assert max_abs_diff(project_Xle(psi, 0), psi) == 0.0


def test_oracle_moves_empty_sigma():
    dims = ProblemDims(3, 5, 1)
    a = dims.index(1, 2, 0)
    psi = FourierState.from_dict({(PhaseFunction(), a): 0.5 + 0.5j}, 3, 5, dims)
    out = apply_oracle(psi).to_dict()
    assert out == {(PhaseFunction(((1, 2),)), a): 0.5 + 0.5j}


def test_oracle_with_c_zero_is_identity():
    dims = ProblemDims(3, 5, 1)
    a = dims.index(2, 0, 0)
    psi = FourierState.from_dict({(PhaseFunction(((1, 4),)), a): 1.0}, 3, 5, dims)
    assert apply_oracle(psi).to_dict() == psi.to_dict()


def test_oracle_cancels_modulo_q():
    dims = ProblemDims(3, 5, 1)
    a = dims.index(1, 2, 0)
    psi = FourierState.from_dict({(PhaseFunction(((1, 3),)), a): 1.0}, 3, 5, dims)
    assert apply_oracle(psi).to_dict() == {(PhaseFunction(), a): 1.0}


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(2, 5), st.integers(1, 2), st.integers(0, 2**32 - 1))
def test_oracle_matches_entrywise_definition(n, q, dimW, seed):
    rng = np.random.default_rng(seed)
    dims = ProblemDims(n, q, dimW)
    psi = random_state(dims, n, 6, rng)
    fast = apply_oracle(psi).to_dict()
    slow = naive_oracle(psi)
    assert fast.keys() == slow.keys()
    assert max(abs(fast[k] - slow[k]) for k in fast) < 1e-12


def test_oracle_and_unitary_preserve_norm(rng):
    for _ in range(100):
        n, q, dimW = int(rng.integers(1, 5)), int(rng.integers(2, 6)), int(rng.integers(1, 3))
        dims = ProblemDims(n, q, dimW)
        psi = random_state(dims, n, 5, rng, normalize=False)
        U = random_unitary(dims.dim_a, rng)
        assert apply_oracle(psi).norm() == pytest.approx(psi.norm(), rel=1e-12)
        assert apply_unitary(psi, U).norm() == pytest.approx(psi.norm(), rel=1e-12)


def test_unitary_examples(rng):
    dims = ProblemDims(3, 3, 2)
    psi = random_state(dims, 2, 6, rng)
    assert max_abs_diff(apply_unitary(psi, np.eye(dims.dim_a)), psi) == 0.0
    out = apply_unitary(psi, random_unitary(dims.dim_a, rng))
    assert set(out.codes.tolist()) == set(psi.codes.tolist())
    with pytest.raises(ValueError):
        apply_unitary(psi, np.eye(dims.dim_a + 1))


def test_phase_shift_is_a_relabelling():
    psi = FourierState.from_dict({PhaseFunction(((2, 1),)): 1.0}, 3, 3)
    out = apply_phase_shift(psi, 2, 2)
    assert out.to_dict() == {(PhaseFunction(), 0): 1.0}


def test_run_uniform_zero_queries(rng):
    alg = random_algorithm(ProblemDims(3, 3, 1), 0, rng)
    traj = run_uniform(alg)
    assert len(traj) == 2
    expected = apply_unitary(uniform_initial_state(alg.dims), alg.unitaries[0])
    assert max_abs_diff(traj[1], expected) == 0.0


def test_run_uniform_norms_and_support(rng):
    for _ in range(10):
        n, q, dimW, T = int(rng.integers(1, 5)), int(rng.integers(2, 6)), int(rng.integers(1, 3)), int(rng.integers(0, 4))
        with pytest.warns(UserWarning) if T > n else _nullcontext():
            alg = random_algorithm(ProblemDims(n, q, dimW), T, rng)
        traj = run_uniform(alg)
        assert len(traj) == 2 * (T + 1)
        for j, psi in enumerate(traj):
            t = j // 2
            assert abs(psi.norm() - 1) < 1e-9
            assert psi.max_support() <= t
            assert max_abs_diff(project_Xle(psi, t), psi) == 0.0


class _nullcontext:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def test_project_xle_truncates():
    psi = FourierState.from_dict({PhaseFunction(): 1.0, PhaseFunction(((1, 1),)): 2.0}, 2, 3)
    assert project_Xle(psi, 0).to_dict() == {(PhaseFunction(), 0): 1.0}
    assert project_Xle(psi, 5).to_dict() == psi.to_dict()
    with pytest.raises(ValueError):
        project_Xle(psi, -1)


def test_standard_simulation_zero_queries(rng):
    alg = random_algorithm(ProblemDims(3, 4, 1), 0, rng)
    start = np.zeros(alg.dims.dim_a, dtype=complex)
    start[0] = 1
    np.testing.assert_allclose(standard_basis_simulate(alg, [1, 2, 3]), alg.unitaries[0] @ start)


def test_identity_algorithm_only_picks_up_a_phase():
    dims = ProblemDims(3, 4, 1)
    alg = constant_algorithm(dims, T=2)
    base = np.abs(standard_basis_simulate(constant_algorithm(dims, T=0), [0, 0, 0])) ** 2
    for x in ([1, 2, 3], [3, 3, 0]):
        out = standard_basis_simulate(alg, x)
        np.testing.assert_allclose(np.abs(out) ** 2, base, atol=1e-12)


def test_fourier_domain_matches_per_input_simulation(rng):
    for n, q, dimW, T in [(2, 3, 1, 1), (3, 3, 2, 2), (3, 5, 1, 3), (4, 2, 2, 3)]:
        alg = random_algorithm(ProblemDims(n, q, dimW), T, rng)
        assert max_abs_diff(fourier_from_inputs(alg), run_uniform(alg)[-1]) < 1e-9


def test_all_inputs_order():
    xs = all_inputs(2, 3)
    assert xs.shape == (9, 2)
    assert xs[:4].tolist() == [[0, 0], [0, 1], [0, 2], [1, 0]]


def test_batched_simulation_matches_single(rng):
    alg = random_algorithm(ProblemDims(3, 3, 1), 2, rng)
    xs = all_inputs(3, 3)[:7]
    batch = simulate_inputs(alg, xs)
    for x, row in zip(xs, batch):
        np.testing.assert_allclose(standard_basis_simulate(alg, x), row)


def test_pointwise_success_examples(rng):
    dims = ProblemDims(3, 3, 1)
    responses = [frozenset({1, 2}), frozenset({1, 3}), frozenset({2, 3})]
    alg = random_algorithm(dims, 2, rng)
    meas = random_measurement(dims, responses, rng)
    x = [0, 1, 1]
    assert success_probability_pointwise(alg, x, meas, responses) == pytest.approx(1.0, abs=1e-9)
    assert success_probability_pointwise(alg, x, meas, []) == 0.0
    labels = np.ones(dims.dim_a, dtype=int)
    labels[0] = 0
    pinned = Measurement(labels, responses)
    still = constant_algorithm(dims, T=0)
    assert success_probability_pointwise(still, x, pinned, [responses[0]]) == pytest.approx(1.0)
    assert success_probability_pointwise(still, x, pinned, [responses[2]]) == 0.0


def test_non_unitary_rejected_unless_validation_is_off(rng):
    dims = ProblemDims(2, 2, 1)
    bad = 1.1 * np.eye(dims.dim_a)
    with pytest.raises(ValueError):
        QueryAlgorithm(dims, (bad,))
    alg = QueryAlgorithm(dims, (bad,), validate=False)
    assert not alg.is_unitary()
    assert alg.unitarity_defect() == pytest.approx(0.21)


def test_more_queries_than_variables_warns(rng):
    with pytest.warns(UserWarning):
        random_algorithm(ProblemDims(2, 2, 1), 3, rng)


def test_measurement_rejects_labels_outside_responses():
    with pytest.raises(ValueError):
        Measurement(np.array([0, 2]), (frozenset({1, 2}), frozenset({1, 3})))


def test_serialization_is_frozen():
    dims = ProblemDims(2, 3, 1)
    psi = FourierState.from_dict({(PhaseFunction(((1, 2),)), dims.index(2, 1)): 0.5 - 0.25j}, 2, 3, dims)
    assert psi.serialize().strip() == "1->2 | 4 | 0.5 | -0.25"
