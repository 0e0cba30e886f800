import numpy as np
import pytest

from times_adapt.core import PauliSum, StateVector, eigendecompose, evolve_exact, fidelity
from times_adapt.errors import ContractViolation, DimensionMismatch, TrainingQualityError
from times_adapt.tepid import oracle_model
from times_adapt.times import (
    EigenbasisState,
    _cost_and_grad,
    depth_report,
    evolve_times_i,
    evolve_times_ii,
    fidelity_prediction,
    find_coefficients,
    predict_fidelity,
)

from conftest import FIG3_LABELS, random_state

T_GRID = np.linspace(0.0, 10.0, 41)


def _eigen_superposition(spectrum, coeffs):
    c = np.zeros(spectrum.dim, dtype=complex)
    c[: len(coeffs)] = coeffs
    return StateVector(spectrum.eigenvectors @ (c / np.linalg.norm(c)))


def test_cost_gradient_matches_finite_differences(rng):
    for m in (2, 3, 6):
        b = random_state(rng, m) * 0.9
        x = rng.normal(size=2 * (m - 1))
        _, g = _cost_and_grad(x, b)
        fd = np.array([(_cost_and_grad(x + 1e-6 * e, b)[0] - _cost_and_grad(x - 1e-6 * e, b)[0]) / 2e-6
                       for e in np.eye(x.size)])
        assert np.max(np.abs(fd - g)) < 1e-8


def test_eigenstate_input_gives_one_hot(exact_model):
    psi = exact_model.state(2)
    st = find_coefficients(psi, exact_model)
    expected = np.zeros(5)
    expected[2] = 1.0
    # the cost is quadratic in the amplitude error, so 1e-14 in cost is ~1e-7 in amplitude
    assert np.allclose(st.alphas, expected, atol=1e-6)
    assert st.residual_norm_sq < 1e-8


def test_uniform_superposition_coefficients(exact_model, xxz6_spectrum):
    psi = _eigen_superposition(xxz6_spectrum, np.ones(5))
    st = find_coefficients(psi, exact_model)
    assert np.allclose(st.alphas, 1 / np.sqrt(5), atol=1e-6)


def test_partial_projection_residual(exact_model, xxz6_spectrum, rng):
    c = np.zeros(64, dtype=complex)
    c[:5] = random_state(rng, 5) * np.sqrt(0.8)
    c[10:14] = random_state(rng, 4) * np.sqrt(0.2)
    psi = StateVector(xxz6_spectrum.eigenvectors @ c)
    st = find_coefficients(psi, exact_model)
    assert st.residual_norm_sq == pytest.approx(0.2, abs=1e-6)
    assert st.subspace_weight + st.residual_norm_sq == pytest.approx(1.0, abs=1e-10)


def test_gauge_makes_largest_coefficient_real_positive(exact_model, xxz6_spectrum, rng):
    psi = _eigen_superposition(xxz6_spectrum, random_state(rng, 5))
    a = find_coefficients(psi, exact_model).alphas
    k = np.argmax(np.abs(a))
    assert abs(np.imag(a[k])) < 1e-12 and np.real(a[k]) > 0


def test_find_coefficients_contract(exact_model, xxz6_spectrum):
    with pytest.raises(DimensionMismatch):
        find_coefficients(np.ones(8) / np.sqrt(8), exact_model)
    with pytest.raises(ContractViolation):
        find_coefficients(2 * xxz6_spectrum.eigenvectors[:, 0], exact_model)
    outside = xxz6_spectrum.vector(20)
    with pytest.raises(TrainingQualityError):
        find_coefficients(outside, exact_model, expect_in_subspace=True)


def test_eigenbasis_state_invariant(exact_model):
    with pytest.raises(ContractViolation):
        EigenbasisState(exact_model, np.full(5, 0.5), 0.3)
    with pytest.raises(DimensionMismatch):
        EigenbasisState(exact_model, np.ones(2) / np.sqrt(2), 0.0)


def test_times_i_at_zero_reproduces_projection(exact_model, xxz6_spectrum, rng):
    c = random_state(rng, 64)
    psi = StateVector(xxz6_spectrum.eigenvectors @ c)
    st = find_coefficients(psi, exact_model)
    proj = xxz6_spectrum.eigenvectors[:, :5] @ c[:5]
    assert fidelity(evolve_times_i(st, 0.0), proj / np.linalg.norm(proj)) == pytest.approx(1.0, abs=1e-10)


def test_times_i_stationary_eigenstate(exact_model, xxz6_spectrum):
    st = EigenbasisState.from_alphas(exact_model, [0, 0, 0, 1, 0])
    for t in np.linspace(0, 100, 11):
        assert fidelity(evolve_times_i(st, t), evolve_exact(exact_model.state(3), xxz6_spectrum, t)) > 1 - 1e-12


def test_times_ii_identity_at_zero(exact_model, rng):
    psi = random_state(rng, 64)
    assert np.allclose(evolve_times_ii(psi, exact_model, 0.0).amplitudes, psi, atol=1e-10)


def test_times_ii_composition(exact_model, rng):
    psi = random_state(rng, 64)
    two_step = evolve_times_ii(evolve_times_ii(psi, exact_model, 1.3), exact_model, 2.4)
    assert np.max(np.abs(two_step.amplitudes - evolve_times_ii(psi, exact_model, 3.7).amplitudes)) < 1e-10


def test_times_ii_dimension_check(exact_model):
    with pytest.raises(DimensionMismatch):
        evolve_times_ii(np.ones(4) / 2, exact_model, 1.0)


def test_variants_agree_inside_subspace(exact_model, xxz6_spectrum, rng):
    psi = _eigen_superposition(xxz6_spectrum, random_state(rng, 5))
    st = find_coefficients(psi, exact_model)
    for t in T_GRID:
        assert fidelity(evolve_times_i(st, t), evolve_times_ii(psi, exact_model, t)) > 1 - 1e-8


def test_times_i_is_time_independent_for_subspace_states(exact_model, xxz6_spectrum, rng):
    psi = _eigen_superposition(xxz6_spectrum, random_state(rng, 5))
    st = find_coefficients(psi, exact_model)
    f = [fidelity(evolve_times_i(st, t), evolve_exact(psi, xxz6_spectrum, t)) for t in T_GRID]
    assert np.std(f) < 1e-8


def test_energy_shift_gives_global_phase(exact_model, xxz6_spectrum, rng):
    psi = _eigen_superposition(xxz6_spectrum, random_state(rng, 5))
    for t in (0.7, 5.0):
        a = evolve_times_ii(psi, exact_model, t, reference="gap")
        b = evolve_times_ii(psi, exact_model, t, reference="absolute")
        assert fidelity(a, b) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("m", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("variant", ["times_i", "times_ii"])
def test_prediction_matches_simulation(exact_model, xxz6_spectrum, rng, m, variant):
    model = exact_model.truncate(m) if m < 5 else exact_model
    psi = _eigen_superposition(xxz6_spectrum, random_state(rng, 5))
    st = find_coefficients(psi, model)
    if variant == "times_i":
        sim = [fidelity(evolve_exact(psi, xxz6_spectrum, t), evolve_times_i(st, t)) for t in T_GRID]
    else:
        sim = [fidelity(evolve_exact(psi, xxz6_spectrum, t), evolve_times_ii(psi, model, t)) for t in T_GRID]
    assert np.max(np.abs(np.array(sim) - predict_fidelity(st, xxz6_spectrum, variant, T_GRID))) < 1e-10


def test_prediction_for_full_subspace_state(exact_model, xxz6_spectrum, rng):
    psi = _eigen_superposition(xxz6_spectrum, random_state(rng, 5))
    st = find_coefficients(psi, exact_model)
    for variant in ("times_i", "times_ii"):
        assert np.allclose(predict_fidelity(st, xxz6_spectrum, variant, T_GRID), 1.0, atol=1e-10)


def test_times_i_prediction_forms(exact_model, xxz6_spectrum):
    psi = _eigen_superposition(xxz6_spectrum, np.ones(5))
    st = find_coefficients(psi, exact_model.truncate(3))
    assert fidelity_prediction(st, xxz6_spectrum, "times_i")(0.0)[0] == pytest.approx(0.6, abs=1e-10)
    unnormalized = fidelity_prediction(st, xxz6_spectrum, "times_i", renormalized=False)
    assert unnormalized(0.0)[0] == pytest.approx(0.36, abs=1e-10)
    assert fidelity_prediction(st, xxz6_spectrum, "times_i").oscillatory_terms == ()


def test_times_ii_prediction_needs_psi0(exact_model, xxz6_spectrum):
    st = EigenbasisState.from_alphas(exact_model, [1, 0, 0, 0, 0])
    with pytest.raises(ContractViolation):
        fidelity_prediction(st, xxz6_spectrum, "times_ii")


def test_depth_report(exact_model):
    assert depth_report(exact_model, "times_i")["two_qubit_depth"] == 8 * 5 * 5


def test_constant_shift_of_hamiltonian(xxz6, xxz6_spectrum, rng):
    shifted = xxz6 + PauliSum(6, ((3.25, "IIIIII"),))
    spec2 = eigendecompose(shifted)
    m1 = oracle_model(xxz6, xxz6_spectrum, FIG3_LABELS, range(5))
    m2 = oracle_model(shifted, spec2, FIG3_LABELS, range(5))
    psi = _eigen_superposition(xxz6_spectrum, random_state(rng, 5))
    for t in (0.5, 4.0):
        a, b = evolve_times_ii(psi, m1, t), evolve_times_ii(psi, m2, t)
        assert fidelity(a, b) == pytest.approx(1.0, abs=1e-12)
