"""Dense statevector / operator substrate.

Conventions used everywhere in the package:

* qubit ``q`` is bit ``q`` of the basis-state index (qubit 0 is the least
  significant bit); lattice site ``k`` (1-based) lives on qubit ``k - 1``;
* a Pauli word is written left to right starting from qubit 0, so
  ``"XZ"`` is X on qubit 0 and Z on qubit 1;
* ``|0>`` is the +1 eigenstate of Z.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import ContractViolation, DimensionMismatch, ResourceLimitError

MAX_QUBITS = 14
PAULI_CHARS = "IXYZ"

ArrayLike = Union["StateVector", np.ndarray, Sequence[complex]]


def _as_array(psi: ArrayLike) -> np.ndarray:
    if isinstance(psi, StateVector):
        return psi.amplitudes
    return np.asarray(psi, dtype=complex)


def _n_qubits_for(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 1 or 1 << n != dim:
        raise DimensionMismatch(f"dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True)
class StateVector:
    """Dense amplitude vector over ``n_qubits`` qubits (read-only)."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        _n_qubits_for(amps.size)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_qubits(self) -> int:
        return _n_qubits_for(self.amplitudes.size)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "StateVector":
        if not 0 <= index < 1 << n_qubits:
            raise ContractViolation(f"basis index {index} out of range for {n_qubits} qubits")
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(amps)

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        return cls.basis(n_qubits, 0)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "StateVector":
        nrm = self.norm()
        if nrm == 0.0:
            raise ContractViolation("cannot normalize the zero vector")
        return StateVector(self.amplitudes / nrm)

    def inner(self, other: ArrayLike) -> complex:
        """<self|other>."""
        b = _as_array(other)
        if b.size != self.dim:
            raise DimensionMismatch(f"{self.dim} vs {b.size}")
        return complex(np.vdot(self.amplitudes, b))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)

    def __len__(self) -> int:
        return self.dim


def basis_index(bits: Sequence[int]) -> int:
    """Index of the product state with ``bits[q]`` on qubit ``q``."""
    return sum(int(b) << q for q, b in enumerate(bits))


def pauli_action(word: str) -> tuple[int, np.ndarray]:
    """Return ``(flip, phase)`` with ``P|b> = phase[b] |b ^ flip>``."""
    n = len(word)
    xmask = zmask = 0
    n_y = 0
    for q, ch in enumerate(word):
        if ch == "X":
            xmask |= 1 << q
        elif ch == "Y":
            xmask |= 1 << q
            zmask |= 1 << q
            n_y += 1
        elif ch == "Z":
            zmask |= 1 << q
        elif ch != "I":
            raise ContractViolation(f"invalid Pauli character {ch!r} in {word!r}")
    idx = np.arange(1 << n, dtype=np.int64)
    parity = np.zeros(idx.size, dtype=np.int64)
    masked = idx & zmask
    while np.any(masked):
        parity ^= masked & 1
        masked >>= 1
    # Y|b> = i (-1)^b |~b>
    phase = (1j**n_y) * (1.0 - 2.0 * parity)
    return xmask, phase.astype(complex)


@dataclass(frozen=True)
class PauliSum:
    """Real-weighted sum of Pauli words on ``n_qubits`` qubits."""

    n_qubits: int
    terms: tuple[tuple[float, str], ...] = ()

    def __post_init__(self):
        clean = []
        for coeff, word in self.terms:
            if np.iscomplexobj(coeff) and abs(np.imag(coeff)) > 0:
                raise ContractViolation(f"coefficient {coeff} of {word} is not real")
            if len(word) != self.n_qubits:
                raise ContractViolation(f"word {word!r} does not act on {self.n_qubits} qubits")
            if set(word) - set(PAULI_CHARS):
                raise ContractViolation(f"invalid Pauli word {word!r}")
            clean.append((float(np.real(coeff)), str(word)))
        object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def from_ops(cls, n_qubits: int, coeff: float, ops: dict[int, str]) -> "PauliSum":
        """Single term from a ``{qubit: 'X'|'Y'|'Z'}`` map."""
        word = ["I"] * n_qubits
        for q, ch in ops.items():
            word[q] = ch
        return cls(n_qubits, ((coeff, "".join(word)),))

    def __add__(self, other: "PauliSum") -> "PauliSum":
        if not isinstance(other, PauliSum):
            return NotImplemented
        if other.n_qubits != self.n_qubits:
            raise DimensionMismatch(f"{self.n_qubits} vs {other.n_qubits} qubits")
        return PauliSum(self.n_qubits, self.terms + other.terms)

    def __radd__(self, other):
        if other == 0:
            return self
        return NotImplemented

    def __mul__(self, scalar: float) -> "PauliSum":
        return PauliSum(self.n_qubits, tuple((scalar * c, w) for c, w in self.terms))

    __rmul__ = __mul__

    def __neg__(self) -> "PauliSum":
        return self * -1.0

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + (-other)

    def simplify(self, atol: float = 0.0) -> "PauliSum":
        """Merge repeated words and drop terms with ``|c| <= atol``."""
        acc: dict[str, float] = {}
        for c, w in self.terms:
            acc[w] = acc.get(w, 0.0) + c
        return PauliSum(self.n_qubits, tuple((c, w) for w, c in sorted(acc.items()) if abs(c) > atol))

    def __len__(self) -> int:
        return len(self.terms)

    @cached_property
    def matrix(self) -> np.ndarray:
        m = dense_matrix(self)
        m.setflags(write=False)
        return m

    def to_dict(self) -> dict:
        return {"n_qubits": self.n_qubits, "terms": [[c, w] for c, w in self.terms]}

    @classmethod
    def from_dict(cls, data: dict) -> "PauliSum":
        return cls(int(data["n_qubits"]), tuple((float(c), str(w)) for c, w in data["terms"]))


def dense_matrix(h: PauliSum, max_qubits: int = MAX_QUBITS) -> np.ndarray:
    """Dense ``2^n x 2^n`` realization of ``h``."""
    if h.n_qubits > max_qubits:
        raise ResourceLimitError(f"{h.n_qubits} qubits exceeds the dense cap of {max_qubits}")
    dim = 1 << h.n_qubits
    out = np.zeros((dim, dim), dtype=complex)
    cols = np.arange(dim)
    for coeff, word in h.terms:
        flip, phase = pauli_action(word)
        out[cols ^ flip, cols] += coeff * phase
    return out


def apply_operator(op: Union[PauliSum, np.ndarray], psi: ArrayLike) -> np.ndarray:
    a = _as_array(psi)
    mat = op.matrix if isinstance(op, PauliSum) else np.asarray(op)
    if mat.shape[1] != a.shape[0]:
        raise DimensionMismatch(f"operator of size {mat.shape[1]} vs state of size {a.shape[0]}")
    return mat @ a


def expectation(op: Union[PauliSum, np.ndarray], psi: ArrayLike) -> float:
    a = _as_array(psi)
    return float(np.real(np.vdot(a, apply_operator(op, a))))


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def is_hermitian(mat: np.ndarray, atol: float = 1e-12) -> bool:
    return bool(np.allclose(mat, mat.conj().T, rtol=0.0, atol=atol))


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues with column eigenvectors."""

    energies: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.energies.size

    def vector(self, k: int) -> StateVector:
        return StateVector(self.eigenvectors[:, k])

    def coefficients(self, psi: ArrayLike) -> np.ndarray:
        """Amplitudes <psi_k|psi> in the eigenbasis."""
        a = _as_array(psi)
        if a.size != self.dim:
            raise DimensionMismatch(f"state of size {a.size} vs spectrum of size {self.dim}")
        return self.eigenvectors.conj().T @ a


def eigendecompose(h: Union[PauliSum, np.ndarray], max_qubits: int = MAX_QUBITS) -> Spectrum:
    mat = dense_matrix(h, max_qubits) if isinstance(h, PauliSum) else np.asarray(h, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(mat)))) if mat.size else 1.0
    if not is_hermitian(mat, atol=1e-12 * scale):
        raise ContractViolation("eigendecompose requires a Hermitian operator")
    energies, vecs = np.linalg.eigh(mat)
    energies.setflags(write=False)
    vecs.setflags(write=False)
    return Spectrum(energies, vecs)


def evolve_exact(psi0: ArrayLike, spec: Spectrum, t: float) -> StateVector:
    """``exp(-iHt)|psi0>`` through the eigenbasis."""
    coeffs = spec.coefficients(psi0)
    return StateVector(spec.eigenvectors @ (np.exp(-1j * spec.energies * t) * coeffs))


def fidelity(a: ArrayLike, b: ArrayLike) -> float:
    """|<a|b>|^2, clipped to [0, 1] against round-off."""
    x, y = _as_array(a), _as_array(b)
    if x.size != y.size:
        raise DimensionMismatch(f"{x.size} vs {y.size}")
    return float(min(1.0, abs(np.vdot(x, y)) ** 2))


@dataclass(frozen=True)
class DensityEnsemble:
    """Diagonal mixed state ``sum_k weights[k] |states[k]><states[k]|``."""

    weights: np.ndarray
    states: tuple[StateVector, ...] = field(default=())

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        states = tuple(s if isinstance(s, StateVector) else StateVector(s) for s in self.states)
        if w.size != len(states):
            raise ContractViolation(f"{w.size} weights for {len(states)} states")
        if np.any(w < 0):
            raise ContractViolation("ensemble weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-10:
            raise ContractViolation(f"ensemble weights sum to {w.sum()!r}, not 1")
        if states:
            mat = np.column_stack([s.amplitudes for s in states])
            gram = mat.conj().T @ mat
            if np.max(np.abs(gram - np.eye(len(states)))) > 1e-8:
                raise ContractViolation("ensemble states are not orthonormal")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "states", states)

    @classmethod
    def from_columns(cls, weights: Iterable[float], columns: np.ndarray) -> "DensityEnsemble":
        return cls(np.asarray(list(weights), dtype=float), tuple(StateVector(c) for c in columns.T))

    def entropy(self) -> float:
        return von_neumann_entropy(self.weights)


def von_neumann_entropy(weights: np.ndarray) -> float:
    """-sum w ln w with 0 ln 0 = 0."""
    w = np.asarray(weights, dtype=float)
    nz = w[w > 0]
    return float(-np.sum(nz * np.log(nz)))


def free_energy(rho: DensityEnsemble, h: Union[PauliSum, np.ndarray], beta: float) -> float:
    """Tr(rho H) - S(rho)/beta."""
    if beta <= 0:
        raise ContractViolation("beta must be positive")
    if abs(float(np.sum(rho.weights)) - 1.0) > 1e-10:
        raise ContractViolation("ensemble weights are not normalized")
    energy = sum(w * expectation(h, s) for w, s in zip(rho.weights, rho.states))
    return float(energy - rho.entropy() / beta)
