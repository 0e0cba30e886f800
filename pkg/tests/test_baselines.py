import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from times_adapt.baselines import (
    DEPTH_PER_STEP,
    TrotterPlan,
    evolve_trotter,
    exact_trace,
    oracle,
    partition,
    plan_trotter,
    plan_with_steps,
)
from times_adapt.core import PauliSum, dense_matrix, eigendecompose, evolve_exact, expectation, fidelity
from times_adapt.errors import ConfigError, DimensionMismatch
from times_adapt.models import (
    WavePacketSpec,
    XXZSpec,
    build_xxz,
    gaussian_wavepacket,
    lfxxz,
    sfxxz,
    total_sz,
    xxz,
)

from conftest import random_state

SPECS = [xxz(5, 1.5), lfxxz(6, -1.5, 0.25), sfxxz(7, 1.5, 0.5), sfxxz(6, 1.0, 0.3)]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.n_sites}-{s.boundary}-{s.field_pattern}")
def test_partition_reassembles_hamiltonian(spec):
    odd, even, fld = partition(spec)
    assert np.allclose(dense_matrix(odd + even + fld), dense_matrix(build_xxz(spec)))


def test_groups_commute_on_open_chain():
    odd, even, _ = partition(xxz(6, 1.5))
    a, b = dense_matrix(odd), dense_matrix(even)
    # bonds inside one group are disjoint, so each group is a commuting set
    for group in (odd, even):
        terms = [PauliSum(6, (t,)) for t in group.terms]
        for x in terms:
            for y in terms:
                mx, my = dense_matrix(x), dense_matrix(y)
                assert np.allclose(mx @ my, my @ mx)
    assert not np.allclose(a @ b, b @ a)


@pytest.mark.parametrize("depth,t_max,n_steps", [(413, 10.0, 68), (1534, 10.0, 255), (6, 1.0, 1), (11, 1.0, 1)])
def test_depth_matched_step_count(depth, t_max, n_steps):
    plan = plan_trotter(sfxxz(7, 1.5, 0.5), t_max, depth)
    assert plan.n_steps == n_steps
    assert plan.two_qubit_depth <= depth
    assert plan.total_time == pytest.approx(t_max)


def test_wavepacket_step_size():
    plan = plan_trotter(lfxxz(7, -1.5, 0.25), 10.0, 413)
    assert 0.145 <= plan.dt <= 0.150


def test_plan_rejects_bad_budget():
    with pytest.raises(ConfigError):
        plan_trotter(xxz(4, 1.0), 1.0, DEPTH_PER_STEP - 1)
    with pytest.raises(ConfigError):
        plan_trotter(xxz(4, 1.0), 0.0, 60)
    with pytest.raises(ConfigError):
        plan_with_steps(xxz(4, 1.0), 1.0, 0)


def test_commuting_terms_are_exact():
    # with no XY coupling every factor is diagonal, so any step count is exact
    spec = XXZSpec(5, 1.3, 0.7, "open", "uniform")
    odd, even, fld = partition(spec)
    xy_free = [PauliSum(5, tuple(t for t in g.terms if "X" not in t[1] and "Y" not in t[1])) for g in (odd, even)]
    plan = TrotterPlan(xy_free[0], xy_free[1], fld, 0.5, 6)
    psi = random_state(np.random.default_rng(3), 32)
    exact = evolve_exact(psi, eigendecompose(plan.hamiltonian), plan.total_time)
    assert fidelity(evolve_trotter(plan, psi).final, exact) == pytest.approx(1.0, abs=1e-12)


def test_tiny_step_is_near_identity():
    plan = plan_with_steps(xxz(4, 1.5), 1e-6, 1)
    assert np.allclose(plan.step_unitary, np.eye(16), atol=1e-5)


def test_step_unitary_is_unitary():
    u = plan_trotter(sfxxz(7, 1.5, 0.5), 10.0, 1534).step_unitary
    assert np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=1e-10)


def test_converges_with_many_steps():
    spec = lfxxz(4, -1.5, 0.25)
    psi = gaussian_wavepacket(WavePacketSpec(2, 1.0), 4)
    trace = evolve_trotter(plan_with_steps(spec, 2.0, 10_000), psi)
    assert fidelity(trace.final, evolve_exact(psi, oracle(spec), 2.0)) > 1 - 1e-6


def test_first_order_error_scaling():
    spec = lfxxz(4, -1.5, 0.25)
    psi = gaussian_wavepacket(WavePacketSpec(2, 1.0), 4)
    exact = evolve_exact(psi, oracle(spec), 2.0)
    err = [1 - fidelity(evolve_trotter(plan_with_steps(spec, 2.0, n), psi).final, exact) for n in (40, 80)]
    # amplitude error halves, so infidelity drops about fourfold
    assert 3.0 < err[0] / err[1] < 5.0


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 40))
def test_magnetization_conserved(seed, n):
    spec = sfxxz(6, 1.5, 0.5)
    psi = random_state(np.random.default_rng(seed), 64)
    trace = evolve_trotter(plan_with_steps(spec, 4.0, n), psi)
    sz = total_sz(6)
    assert abs(expectation(sz, trace.final) - expectation(sz, psi)) < 1e-10


def test_trace_grid_and_shape():
    plan = plan_with_steps(xxz(4, 1.0), 1.0, 8)
    trace = evolve_trotter(plan, random_state(np.random.default_rng(0), 16))
    assert trace.states.shape == (9, 16)
    assert np.allclose(trace.times, np.arange(9) / 8)
    norms = np.linalg.norm(trace.states, axis=1)
    assert np.allclose(norms, 1.0)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        evolve_trotter(plan_with_steps(xxz(4, 1.0), 1.0, 2), np.ones(8) / np.sqrt(8))


def test_exact_trace_matches_pointwise():
    spec = xxz(4, 1.5)
    spectrum = oracle(spec)
    psi = random_state(np.random.default_rng(1), 16)
    t = np.array([0.0, 0.3, 2.0])
    rows = exact_trace(psi, spectrum, t)
    assert np.allclose(rows[0], psi)
    for row, ti in zip(rows, t):
        assert np.allclose(row, evolve_exact(psi, spectrum, ti).amplitudes)
