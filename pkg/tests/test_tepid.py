import math

import numpy as np
import pytest
from scipy.special import softmax

from times_adapt.ansatz import AdaptAnsatz, PoolOperator, make_pool, qeb_pool
from times_adapt.core import DensityEnsemble, PauliSum, StateVector, dense_matrix, eigendecompose
from times_adapt.errors import ConfigError, ContractViolation, InfiniteGapError, PartialResultError
from times_adapt.models import build_xxz, lfxxz, magnon_labels, xxz
from times_adapt.tepid import (
    TepidConfig,
    TrainedSubspaceModel,
    _Objective,
    adapt_step,
    auto_labels,
    energy_variances,
    extract_gaps,
    free_energy_value,
    level_fidelities,
    pool_gradients,
    sector_indices,
    sector_labels,
    train,
)

from conftest import random_state


def test_extract_gaps_examples():
    assert np.allclose(extract_gaps([0.5, 0.5], 3.0), [0, 0])
    e = np.array([0.0, 1.0, 3.0])
    assert np.allclose(extract_gaps(softmax(-2 * e), 2.0), e, atol=1e-12)


def test_extract_gaps_errors():
    with pytest.raises(InfiniteGapError):
        extract_gaps([1.0, 0.0], 2.0)
    with pytest.raises(ContractViolation):
        extract_gaps([0.2, 0.8], 2.0)
    with pytest.raises(ContractViolation):
        extract_gaps([0.5, 0.5], 0.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        TepidConfig(beta=-1.0, m=2)
    with pytest.raises(ConfigError):
        TepidConfig(beta=1.0, m=2, basis_labels=(1, 1))
    with pytest.raises(ConfigError):
        TepidConfig(beta=1.0, m=3, basis_labels=(1, 2))
    with pytest.raises(ConfigError):
        TepidConfig.from_dict({"beta": 1.0, "m": 2, "colour": "red"})


def test_config_round_trip():
    cfg = TepidConfig(beta=2.0, m=3, basis_labels=(4, 1, 2), pool="pauli3", seed=7)
    assert TepidConfig.from_dict(cfg.to_dict()) == cfg


def test_single_qubit_gibbs_weights():
    z = PauliSum.from_ops(1, 1.0, {0: "Z"})
    model = train(z, TepidConfig(beta=2.0, m=2, pool="pauli"))
    expected = np.array([math.e**2, math.e**-2]) / (math.e**2 + math.e**-2)
    assert np.allclose(model.weights, expected, atol=1e-8)
    assert model.delta_energies == pytest.approx([0.0, 2.0], abs=1e-7)
    assert model.labels == (1, 0)


def test_auto_and_sector_labels(xxz6):
    diag = np.real(np.diag(dense_matrix(xxz6)))
    labels = auto_labels(xxz6, 3)
    assert sorted(diag[list(labels)]) == sorted(np.sort(diag)[:3])
    assert sector_labels(xxz6, (0, 0, 2, -2, 0)) == (21, 42, 10, 43, 22)
    with pytest.raises(ConfigError):
        sector_labels(xxz6, (6, 6))


def _random_ensemble(rng, n, m):
    q, _ = np.linalg.qr(rng.normal(size=(1 << n, m)) + 1j * rng.normal(size=(1 << n, m)))
    return softmax(rng.normal(size=m)), q


def _finite_difference(hmat, states, weights, op, step=1e-5):
    def energy(theta):
        phi = op.apply(theta, states)
        return float(weights @ np.real(np.einsum("ik,ik->k", phi.conj(), hmat @ phi)))

    return (energy(step) - energy(-step)) / (2 * step)


@pytest.mark.parametrize("seed", range(10))
def test_pool_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n, m = 4, 3
    hmat = dense_matrix(build_xxz(lfxxz(n, float(rng.normal()), float(rng.normal()))))
    weights, states = _random_ensemble(rng, n, m)
    pool = make_pool("pauli", n)
    grads = pool_gradients(hmat, states, weights, pool)
    for k in rng.choice(len(pool), 5, replace=False):
        assert grads[k] == pytest.approx(_finite_difference(hmat, states, weights, pool[k]), abs=1e-6)


def test_objective_gradient_matches_finite_differences(rng):
    n, m = 4, 3
    hmat = dense_matrix(build_xxz(xxz(n, 1.3)))
    ref = np.zeros((16, m), dtype=complex)
    ref[[3, 5, 6], range(m)] = 1.0
    ops = qeb_pool(n)[:6]
    obj = _Objective(hmat, ref, ops, beta=1.5)
    x = rng.normal(size=m + len(ops))
    _, grad = obj(x)
    fd = np.array([(obj(x + 1e-6 * e)[0] - obj(x - 1e-6 * e)[0]) / 2e-6 for e in np.eye(x.size)])
    assert np.max(np.abs(fd - grad)) < 1e-7


def test_adapt_step_single_operator_and_commuting_pool():
    z = PauliSum.from_ops(2, 1.0, {0: "Z"}) + PauliSum.from_ops(2, 0.5, {1: "Z"})
    ens = DensityEnsemble(np.array([0.7, 0.3]), (StateVector.basis(2, 0), StateVector.basis(2, 3)))
    commuting = [PoolOperator("zz", PauliSum.from_ops(2, 1.0, {0: "Z", 1: "Z"}))]
    choice = adapt_step(z, ens, AdaptAnsatz(2), commuting)
    assert choice.converged and choice.operator is None
    plus = (StateVector.basis(2, 0).amplitudes + StateVector.basis(2, 1).amplitudes) / math.sqrt(2)
    ens = DensityEnsemble(np.array([1.0]), (StateVector(plus),))
    y0 = PoolOperator("y0", PauliSum.from_ops(2, 1.0, {0: "Y"}))
    choice = adapt_step(z, ens, AdaptAnsatz(2), [y0])
    assert choice.operator is y0 and abs(choice.gradient) > 0.1


def test_adapt_step_ties_go_to_first():
    h = PauliSum.from_ops(2, 1.0, {0: "X", 1: "X"})
    ens = DensityEnsemble(np.array([1.0]), (StateVector.basis(2, 0),))
    pool = make_pool("pauli", 2)
    choice = adapt_step(h, ens, AdaptAnsatz(2), pool)
    best = np.flatnonzero(np.isclose(np.abs(choice.gradients), np.max(np.abs(choice.gradients))))
    assert choice.operator is pool[best[0]]


def test_wavepacket_sector_training():
    h = build_xxz(lfxxz(7, -1.5, 0.25))
    oracle = eigendecompose(h)
    labels = tuple(magnon_labels(7))
    targets = sector_indices(oracle, labels)
    model = train(h, TepidConfig(beta=2.0, m=7, basis_labels=labels), oracle=oracle, target_indices=targets)
    assert model.converged
    assert min(model.diagnostics["eigenstate_fidelities"]) > 1 - 1e-6
    assert np.max(np.abs(model.diagnostics["gap_errors"])) < 1e-4
    assert np.all(np.diff(model.weights) <= 0)
    assert np.array_equal(extract_gaps(model.weights, 2.0), model.delta_energies)


def test_partial_result_carries_model():
    h = build_xxz(xxz(4, 1.5))
    cfg = TepidConfig(beta=2.0, m=3, max_layers=1, beta_start=None)
    with pytest.raises(PartialResultError) as info:
        train(h, cfg)
    assert isinstance(info.value.model, TrainedSubspaceModel)
    assert info.value.model.n_adapt == 1


def test_degenerate_boundary_warns(xxz6, xxz6_spectrum):
    # levels 3 and 4 of the 6-site chain are degenerate; a rank-3 subspace cuts through them
    with pytest.warns(UserWarning, match="degenerate"):
        train(xxz6, TepidConfig(beta=2.0, m=3, max_layers=2, beta_start=None), oracle=xxz6_spectrum,
              raise_on_max_layers=False)


def test_monotone_free_energy_without_annealing():
    h = build_xxz(xxz(4, 1.5))
    model = train(h, TepidConfig(beta=2.0, m=3, beta_start=None, max_layers=40), raise_on_max_layers=False)
    hist = np.array(model.free_energy_history)
    assert np.all(np.diff(hist) <= 1e-10)


@pytest.mark.slow
def test_fig3_training_quality(fig3_model, xxz6):
    diag = fig3_model.diagnostics
    assert min(diag["eigenstate_fidelities"]) > 1 - 1e-4
    assert np.max(np.abs(diag["gap_errors"])) < 1e-3
    assert np.max(energy_variances(fig3_model, xxz6)) < 1e-5
    for stage in diag["anneal_stages"]:
        assert np.all(np.diff(stage["free_energies"]) <= 1e-10)


@pytest.mark.slow
def test_model_serialization_round_trip(fig3_model, tmp_path):
    path = tmp_path / "model.json"
    fig3_model.save(path)
    back = TrainedSubspaceModel.load(path)
    assert back.labels == fig3_model.labels
    assert np.allclose(back.subspace_states(), fig3_model.subspace_states())
    assert back.fingerprint() == fig3_model.fingerprint()


def test_oracle_model_is_exact(exact_model, xxz6_spectrum):
    fids = level_fidelities(exact_model.subspace_states(), xxz6_spectrum, range(5))
    assert np.allclose(fids, 1.0)
    e = xxz6_spectrum.energies[:5]
    assert np.allclose(exact_model.delta_energies, e - e[0], atol=1e-12)
