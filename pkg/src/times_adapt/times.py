"""Fixed-depth real-time evolution in a trained subspace.

``evolve_times_i`` prepares the phase-dressed superposition
``sum_k alpha_k exp(-i dE_k t)|c_k>`` with a modified Givens chain and applies
the basis change once. ``evolve_times_ii`` conjugates a diagonal phase
unitary by the basis change and needs no knowledge of the coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .ansatz import (
    DepthModel,
    amplitudes_from_angles,
    angles_from_amplitudes,
    diagonal_phase_unitary,
    givens_chain,
    givens_steps,
    two_qubit_depth,
)
from .core import Spectrum, StateVector, _as_array
from .errors import ContractViolation, DimensionMismatch, TrainingQualityError
from .tepid import TrainedSubspaceModel

Variant = Literal["times_i", "times_ii"]
PhaseReference = Literal["gap", "absolute"]


@dataclass(frozen=True)
class EigenbasisState:
    """Coefficients of a state in the trained eigenbasis.

    ``alphas`` are unnormalized: ``sum |alpha|^2 + residual_norm_sq = 1``.
    ``psi0`` is kept for verification tools (predictors), never for evolution.
    """

    model: TrainedSubspaceModel
    alphas: np.ndarray
    residual_norm_sq: float
    psi0: Optional[StateVector] = None
    cost_history: tuple[float, ...] = field(default=())

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=complex)
        if a.size != self.model.m:
            raise DimensionMismatch(f"{a.size} coefficients for a rank-{self.model.m} model")
        if abs(np.sum(np.abs(a) ** 2) + self.residual_norm_sq - 1.0) > 1e-10:
            raise ContractViolation("sum |alpha|^2 + residual must equal 1")
        object.__setattr__(self, "alphas", a)

    @property
    def subspace_weight(self) -> float:
        return float(np.sum(np.abs(self.alphas) ** 2))

    @classmethod
    def from_alphas(cls, model: TrainedSubspaceModel, alphas: Sequence[complex], psi0=None) -> "EigenbasisState":
        """Known coefficients (normalized if their norm exceeds 1 by round-off)."""
        a = np.asarray(alphas, dtype=complex)
        w = float(np.sum(np.abs(a) ** 2))
        if w > 1.0 + 1e-10:
            raise ContractViolation(f"coefficient norm {w} exceeds 1")
        if w > 1.0:
            a, w = a / np.sqrt(w), 1.0
        return cls(model, a, max(0.0, 1.0 - w), None if psi0 is None else StateVector(_as_array(psi0)))

    def to_dict(self) -> dict:
        return {
            "model": self.model.fingerprint(),
            "alphas_real": np.real(self.alphas).tolist(),
            "alphas_imag": np.imag(self.alphas).tolist(),
            "residual_norm_sq": self.residual_norm_sq,
        }


def _gauge(alphas: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude coefficient real and positive."""
    k = int(np.argmax(np.abs(alphas)))
    if abs(alphas[k]) == 0:
        return alphas
    return alphas * np.exp(-1j * np.angle(alphas[k]))


def _cost_and_grad(x: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    """C = 1 - |<b|chi(phi, theta)>|^2 with its analytic gradient.

    ``x = (phi_1..phi_{m-1}, theta_2..theta_m)``; ``b`` holds the target's
    components on the labels.
    """
    m = b.size
    phi, th = x[: m - 1], x[m - 1 :]
    s, c = np.sin(phi), np.cos(phi)
    c_ext = np.append(c, 1.0)
    phase = np.exp(-1j * np.cumsum(np.concatenate([[0.0], th])))
    prefix = np.concatenate([[1.0], np.cumprod(s)])  # prod_{l<j} sin(phi_l)
    weights = np.conj(b) * phase
    overlap = np.sum(weights * prefix[:m] * c_ext)
    cost = 1.0 - abs(overlap) ** 2
    grad = np.empty_like(x)
    for k in range(m - 1):
        d_mag = np.zeros(m)
        d_mag[k] = -prefix[k] * s[k]
        for j in range(k + 1, m):
            d_mag[j] = prefix[k] * c[k] * np.prod(s[k + 1 : j]) * c_ext[j]
        grad[k] = -2.0 * np.real(np.conj(overlap) * np.sum(weights * d_mag))
    chi_w = weights * prefix[:m] * c_ext
    tail = np.cumsum(chi_w[::-1])[::-1]
    # theta_l multiplies the phase of every label j >= l
    grad[m - 1 :] = -2.0 * np.real(np.conj(overlap) * -1j * tail[1:])
    return float(cost), grad


def find_coefficients(
    psi0,
    model: TrainedSubspaceModel,
    restarts: int = 8,
    seed: int = 0,
    tol: float = 1e-14,
    expect_in_subspace: bool = False,
    span_tolerance: float = 1e-6,
) -> EigenbasisState:
    """Variational search for the Givens angles that maximize overlap with
    ``psi0`` after the basis change; the overlaps are evaluated directly on
    statevectors (uncompute by V^dagger, then project on the labels)."""
    a = _as_array(psi0)
    if a.size != 1 << model.n_qubits:
        raise DimensionMismatch(f"state of size {a.size} for a {model.n_qubits}-qubit model")
    if abs(np.linalg.norm(a) - 1.0) > 1e-10:
        raise ContractViolation("psi0 must be normalized")
    m = model.m
    uncomputed = model.ansatz.apply(a, dagger=True)
    b = uncomputed[list(model.labels)]
    if m == 1:
        cost = 1.0 - abs(b[0]) ** 2
        history = (cost,)
        chi = np.ones(1, dtype=complex)
    else:
        rng = np.random.default_rng(seed)
        best = None
        for _ in range(restarts):
            x0 = np.concatenate([rng.uniform(0, np.pi / 2, m - 1), rng.uniform(-np.pi, np.pi, m - 1)])
            res = minimize(_cost_and_grad, x0, args=(b,), jac=True, method="BFGS", options={"gtol": tol})
            if best is None or res.fun < best.fun:
                best = res
        cost = float(best.fun)
        history = (cost,)
        phi, th = best.x[: m - 1], best.x[m - 1 :]
        chi = amplitudes_from_angles(phi, np.concatenate([[0.0], th]))
        # absorb the global phase of the overlap so chi is aligned with psi0
        ov = np.vdot(chi, b)
        chi = chi * np.exp(1j * np.angle(ov))
    cost = min(max(cost, 0.0), 1.0)
    if expect_in_subspace and cost > span_tolerance:
        raise TrainingQualityError(f"coefficient search stalled at C={cost:.3e} for an in-subspace state")
    alphas = _gauge(np.sqrt(1.0 - cost) * chi)
    return EigenbasisState(model, alphas, 1.0 - float(np.sum(np.abs(alphas) ** 2)), StateVector(a), history)


def prep_angles(state: EigenbasisState, t: float) -> tuple[np.ndarray, np.ndarray]:
    """(phi, theta(t)) for the Givens chain; alphas are renormalized."""
    a = state.alphas
    return angles_from_amplitudes(np.abs(a), np.angle(a), state.model.delta_energies, t)


def prepare_chi(state: EigenbasisState, t: float) -> StateVector:
    """sum_k alpha_k exp(-i dE_k t)|c_k> (renormalized) via the Givens chain."""
    model = state.model
    if state.subspace_weight == 0.0:
        raise ContractViolation("state has no weight in the trained subspace")
    phi, theta = prep_angles(state, t)
    start = StateVector.basis(model.n_qubits, model.labels[0])
    chi = givens_chain(givens_steps(model.labels, phi, theta), start)
    # the chain realizes alpha_1 real-positive; restore zeta_1 so t = 0 reproduces psi0
    return StateVector(chi.amplitudes * np.exp(1j * np.angle(state.alphas[0])))


def evolve_times_i(state: EigenbasisState, t: float) -> StateVector:
    chi = prepare_chi(state, t)
    return StateVector(state.model.ansatz.apply(chi.amplitudes))


def _phase_energies(model: TrainedSubspaceModel, reference: PhaseReference) -> np.ndarray:
    if reference == "gap":
        return model.delta_energies
    if reference == "absolute":
        return model.energies
    raise ContractViolation(f"unknown phase reference {reference!r}")


def evolve_times_ii(psi0, model: TrainedSubspaceModel, t: float, reference: PhaseReference = "gap") -> StateVector:
    """V D(t) V^dagger |psi0>.

    With ``reference="gap"`` the diagonal carries dE_k (ground level at phase
    zero); ``"absolute"`` uses E_1 + dE_k. Basis states outside the labels get
    no phase either way.
    """
    a = _as_array(psi0)
    if a.size != 1 << model.n_qubits:
        raise DimensionMismatch(f"state of size {a.size} for a {model.n_qubits}-qubit model")
    diag = diagonal_phase_unitary(model.labels, _phase_energies(model, reference), t, model.n_qubits)
    out = model.ansatz.apply(a, dagger=True)
    out = diag * out
    return StateVector(model.ansatz.apply(out))


def depth_report(model: TrainedSubspaceModel, variant: Variant) -> dict:
    d = DepthModel(model.m, model.n_qubits, model.n_adapt, variant)
    return {"variant": variant, "m": d.m, "n_sites": d.n_sites, "n_adapt": d.n_adapt, "two_qubit_depth": two_qubit_depth(d)}


# --------------------------------------------------------------------------
# closed-form fidelity predictors (verification only)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FidelityPrediction:
    variant: Variant
    constant_part: float
    oscillatory_terms: tuple[tuple[float, float], ...] = ()

    def __call__(self, t_grid) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t_grid, dtype=float))
        if self.variant == "times_i":
            return np.full(t.shape, self.constant_part)
        amp = np.full(t.shape, self.constant_part, dtype=complex)
        for weight, freq in self.oscillatory_terms:
            amp += weight * np.exp(-1j * freq * t)
        return np.abs(amp) ** 2


def fidelity_prediction(
    state: EigenbasisState,
    full_spectrum: Spectrum,
    variant: Variant,
    reference: PhaseReference = "gap",
    renormalized: bool = True,
) -> FidelityPrediction:
    """Closed-form fidelity against exact evolution.

    times_i: the protocol evolves the renormalized projection, so the fidelity
    is the in-subspace weight p; ``renormalized=False`` gives p**2, the
    overlap with the unnormalized projection.

    times_ii: |p + sum_j |<psi_j|psi_perp>|^2 exp(-i (E_j - E_ref) t)|^2 where
    psi_perp is psi0 minus its projection on the trained columns and E_ref is
    the energy the diagonal unitary assigns phase zero to. Projecting on the
    trained columns (rather than picking oracle indices) stays exact inside
    degenerate levels, where the oracle eigenvectors are an arbitrary basis.
    """
    p = state.subspace_weight
    if variant == "times_i":
        return FidelityPrediction("times_i", p if renormalized else p**2)
    if variant != "times_ii":
        raise ContractViolation(f"unknown variant {variant!r}")
    if state.psi0 is None:
        raise ContractViolation("the times_ii prediction needs psi0 to resolve out-of-subspace weights")
    cols = state.model.subspace_states()
    psi0 = state.psi0.amplitudes
    inside = cols.conj().T @ psi0
    perp = psi0 - cols @ inside
    coeffs = full_spectrum.coefficients(perp)
    e_ref = state.model.e1 if reference == "gap" else 0.0
    keep = np.abs(coeffs) ** 2 > 1e-300
    terms = tuple(
        (float(abs(c) ** 2), float(e - e_ref)) for c, e in zip(coeffs[keep], full_spectrum.energies[keep])
    )
    return FidelityPrediction("times_ii", float(np.sum(np.abs(inside) ** 2)), terms)


def predict_fidelity(
    state: EigenbasisState,
    full_spectrum: Spectrum,
    variant: Variant,
    t_grid,
    **kwargs,
) -> np.ndarray:
    return fidelity_prediction(state, full_spectrum, variant, **kwargs)(t_grid)
