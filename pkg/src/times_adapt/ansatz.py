"""Circuit primitives: operator pools, adaptive ansatz, modified Givens chain,
diagonal phase unitaries and two-qubit depth accounting.

Gates are applied as exact dense actions on statevectors; no gate synthesis
happens here. The depth formulas are bookkeeping only.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Literal, Sequence

import numpy as np

from .core import PauliSum, StateVector, _as_array, commutator, dense_matrix
from .errors import ConfigError, ContractViolation, DimensionMismatch, UndefinedDirectionError

Variant = Literal["times_i", "times_ii"]

# --------------------------------------------------------------------------
# pools
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PoolOperator:
    """exp(theta * g) with anti-Hermitian ``g = i * hermitian``."""

    label: str
    hermitian: PauliSum
    sz_preserving: bool = False

    @property
    def n_qubits(self) -> int:
        return self.hermitian.n_qubits

    @cached_property
    def generator(self) -> np.ndarray:
        g = 1j * dense_matrix(self.hermitian)
        g.setflags(write=False)
        return g

    @cached_property
    def _h_parts(self):
        h = dense_matrix(self.hermitian)
        h2 = h @ h
        if np.allclose(h2 @ h, h, atol=1e-12):
            return ("closed", h, h2)
        w, v = np.linalg.eigh(h)
        return ("eig", w, v)

    def exp(self, theta: float) -> np.ndarray:
        """Dense exp(theta * g)."""
        kind, a, b = self._h_parts
        if kind == "closed":
            # h^3 = h  =>  exp(i theta h) = 1 + i sin(theta) h + (cos(theta) - 1) h^2
            return np.eye(a.shape[0]) + 1j * np.sin(theta) * a + (np.cos(theta) - 1.0) * b
        return (b * np.exp(1j * theta * a)) @ b.conj().T

    def apply(self, theta: float, psi: np.ndarray) -> np.ndarray:
        """exp(theta g) @ psi for a vector or a block of column vectors."""
        kind, a, b = self._h_parts
        if kind == "closed":
            return psi + 1j * np.sin(theta) * (a @ psi) + (np.cos(theta) - 1.0) * (b @ psi)
        phases = np.exp(1j * theta * a).reshape((-1,) + (1,) * (psi.ndim - 1))
        return b @ (phases * (b.conj().T @ psi))


def _expand(factors: Sequence[tuple[int, dict[str, complex]]], n: int) -> dict[str, complex]:
    """Tensor product of single-qubit factors ``{qubit: {pauli: coeff}}``."""
    out: dict[str, complex] = {}
    qubits = [q for q, _ in factors]
    for combo in itertools.product(*[list(f.items()) for _, f in factors]):
        word = ["I"] * n
        coeff = 1.0 + 0j
        for q, (ch, c) in zip(qubits, combo):
            word[q] = ch
            coeff *= c
        key = "".join(word)
        out[key] = out.get(key, 0) + coeff
    return out


_RAISE = {"X": 0.5, "Y": -0.5j}  # Q^dagger = (X - iY)/2 = |1><0|
_LOWER = {"X": 0.5, "Y": 0.5j}  # Q = (X + iY)/2 = |0><1|


def _excitation_hermitian(n: int, create: Sequence[int], annihilate: Sequence[int]) -> PauliSum:
    """h with i*h = Q^dag_create Q_annihilate - h.c."""
    factors = [(q, _RAISE) for q in create] + [(q, _LOWER) for q in annihilate]
    prod = _expand(factors, n)
    # g = prod - prod^dagger = sum (c - c*) w = sum 2i Im(c) w
    terms = tuple((2.0 * c.imag, w) for w, c in sorted(prod.items()) if abs(c.imag) > 1e-15)
    return PauliSum(n, terms)


def qeb_pool(n_qubits: int) -> list[PoolOperator]:
    """Qubit-excitation-based pool: singles over qubit pairs, doubles over
    disjoint pairs of pairs. Every element conserves total S_z."""
    if n_qubits < 2:
        raise ConfigError("the QEB pool needs at least two qubits")
    pool = []
    for i, j in itertools.combinations(range(n_qubits), 2):
        pool.append(PoolOperator(f"qeb1({i},{j})", _excitation_hermitian(n_qubits, [i], [j]), True))
    for quad in itertools.combinations(range(n_qubits), 4):
        a = quad[0]
        for b in quad[1:]:
            rest = [q for q in quad[1:] if q != b]
            pool.append(
                PoolOperator(
                    f"qeb2({a},{b};{rest[0]},{rest[1]})",
                    _excitation_hermitian(n_qubits, [a, b], rest),
                    True,
                )
            )
    return pool


def pauli_pool(n_qubits: int, max_weight: int = 2) -> list[PoolOperator]:
    """Pauli strings up to ``max_weight`` with an odd number of Y factors.

    Those are the strings P for which i*P is a real matrix; for real
    Hamiltonians and real reference states the other strings have zero
    gradient throughout training.
    """
    if n_qubits < 1:
        raise ConfigError("the Pauli pool needs at least one qubit")
    pool = []
    for weight in range(1, max_weight + 1):
        for support in itertools.combinations(range(n_qubits), weight):
            for chars in itertools.product("XYZ", repeat=weight):
                if chars.count("Y") % 2 == 0:
                    continue
                ops = dict(zip(support, chars))
                h = PauliSum.from_ops(n_qubits, 1.0, ops)
                sz = _commutes_with_sz(h)
                pool.append(PoolOperator(f"P:{h.terms[0][1]}", h, sz))
    return pool


def _commutes_with_sz(h: PauliSum) -> bool:
    n = h.n_qubits
    sz = np.zeros(1 << n)
    idx = np.arange(1 << n)
    for q in range(n):
        sz += 1.0 - 2.0 * ((idx >> q) & 1)
    mat = dense_matrix(h)
    return bool(np.max(np.abs(sz[:, None] * mat - mat * sz[None, :]), initial=0.0) < 1e-12)


def make_pool(name: str, n_qubits: int) -> list[PoolOperator]:
    """``"qeb"``, ``"pauli"`` or ``"pauliN"`` (max weight N)."""
    if name == "qeb":
        return qeb_pool(n_qubits)
    if name.startswith("pauli"):
        weight = int(name[5:] or 2)
        return pauli_pool(n_qubits, weight)
    raise ConfigError(f"unknown pool {name!r}")


def pool_hash(pool: Sequence[PoolOperator]) -> str:
    payload = [[op.label, op.hermitian.to_dict()["terms"]] for op in pool]
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# basis-change circuits
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AdaptAnsatz:
    """V(theta) = exp(theta_L g_L) ... exp(theta_1 g_1); layer 1 acts first."""

    n_qubits: int
    layers: tuple[tuple[PoolOperator, float], ...] = ()

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def parameters(self) -> np.ndarray:
        return np.array([theta for _, theta in self.layers], dtype=float)

    @property
    def operators(self) -> list[PoolOperator]:
        return [op for op, _ in self.layers]

    def append(self, op: PoolOperator, theta: float = 0.0) -> "AdaptAnsatz":
        if op.n_qubits != self.n_qubits:
            raise DimensionMismatch(f"pool operator on {op.n_qubits} qubits, ansatz on {self.n_qubits}")
        return AdaptAnsatz(self.n_qubits, self.layers + ((op, float(theta)),))

    def with_parameters(self, thetas: Iterable[float]) -> "AdaptAnsatz":
        thetas = list(thetas)
        if len(thetas) != self.n_layers:
            raise ContractViolation(f"{len(thetas)} parameters for {self.n_layers} layers")
        return AdaptAnsatz(self.n_qubits, tuple((op, float(t)) for (op, _), t in zip(self.layers, thetas)))

    def apply(self, psi, dagger: bool = False) -> np.ndarray:
        """Act on a vector or a ``(2^n, k)`` block of columns."""
        out = np.array(_as_array(psi), dtype=complex)
        if out.shape[0] != 1 << self.n_qubits:
            raise DimensionMismatch(f"state of size {out.shape[0]} for a {self.n_qubits}-qubit ansatz")
        layers = reversed(self.layers) if dagger else self.layers
        for op, theta in layers:
            out = op.apply(-theta if dagger else theta, out)
        return out

    def matrix(self) -> np.ndarray:
        return self.apply(np.eye(1 << self.n_qubits, dtype=complex))

    def to_dict(self, pool_name: str | None = None, pool: Sequence[PoolOperator] | None = None) -> dict:
        return {
            "kind": "adapt",
            "n_qubits": self.n_qubits,
            "pool": pool_name,
            "pool_hash": pool_hash(pool) if pool is not None else None,
            "layers": [[op.label, theta] for op, theta in self.layers],
        }

    @classmethod
    def from_dict(cls, data: dict, pool: Sequence[PoolOperator]) -> "AdaptAnsatz":
        if data.get("pool_hash") and data["pool_hash"] != pool_hash(pool):
            raise ConfigError("serialized ansatz was built from a different pool definition")
        by_label = {op.label: op for op in pool}
        try:
            layers = tuple((by_label[label], float(theta)) for label, theta in data["layers"])
        except KeyError as exc:
            raise ConfigError(f"pool has no operator {exc.args[0]!r}") from None
        return cls(int(data["n_qubits"]), layers)


@dataclass(frozen=True)
class MatrixBasisChange:
    """A basis change given directly as a unitary matrix (oracle stand-in)."""

    unitary: np.ndarray
    n_layers: int = 0

    @property
    def n_qubits(self) -> int:
        return int(self.unitary.shape[0]).bit_length() - 1

    def apply(self, psi, dagger: bool = False) -> np.ndarray:
        a = _as_array(psi)
        u = self.unitary.conj().T if dagger else self.unitary
        if a.shape[0] != u.shape[1]:
            raise DimensionMismatch(f"state of size {a.shape[0]} vs unitary of size {u.shape[1]}")
        return u @ a

    def matrix(self) -> np.ndarray:
        return np.array(self.unitary)

    def to_dict(self, **_) -> dict:
        return {
            "kind": "matrix",
            "real": np.real(self.unitary).tolist(),
            "imag": np.imag(self.unitary).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MatrixBasisChange":
        return cls(np.array(data["real"]) + 1j * np.array(data["imag"]))


def apply_ansatz(a, psi, dagger: bool = False) -> StateVector:
    return StateVector(a.apply(psi, dagger=dagger))


# --------------------------------------------------------------------------
# modified Givens rotations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GivensStep:
    """exp(i theta P_k) exp(i phi gamma_{k,k+1}) exp(-i theta P_k).

    ``gamma`` rotates |c_k> -> cos(phi)|c_k> + sin(phi)|c_{k+1}>; the
    conjugating phase leaves |c_k> alone and dresses the |c_{k+1}> branch
    with exp(-i theta).
    """

    pair: tuple[int, int]
    theta: float
    phi: float

    def local(self) -> np.ndarray:
        """2x2 block on (|c_k>, |c_{k+1}>)."""
        c, s = np.cos(self.phi), np.sin(self.phi)
        ph = np.exp(1j * self.theta)
        return np.array([[c, -s * ph], [s / ph, c]], dtype=complex)

    def matrix(self, n_qubits: int) -> np.ndarray:
        a, b = self.pair
        u = np.eye(1 << n_qubits, dtype=complex)
        blk = self.local()
        u[np.ix_([a, b], [a, b])] = blk
        return u

    def apply(self, psi: np.ndarray) -> np.ndarray:
        a, b = self.pair
        out = np.array(psi, dtype=complex)
        out[[a, b]] = self.local() @ psi[[a, b]]
        return out


def gamma_generator(n_qubits: int, a: int, b: int) -> np.ndarray:
    """[gamma]_{xy} = i (delta_{x,a} delta_{y,b} - delta_{x,b} delta_{y,a})."""
    g = np.zeros((1 << n_qubits, 1 << n_qubits), dtype=complex)
    g[a, b] = 1j
    g[b, a] = -1j
    return g


def givens_steps(labels: Sequence[int], phi: Sequence[float], theta: Sequence[float]) -> list[GivensStep]:
    """Chain of m-1 steps; step k carries rotation phi[k] and phase theta[k+1]."""
    m = len(labels)
    if len(phi) != m - 1 or len(theta) != m:
        raise ContractViolation(f"need {m - 1} rotation and {m} phase angles for {m} labels")
    return [GivensStep((labels[k], labels[k + 1]), float(theta[k + 1]), float(phi[k])) for k in range(m - 1)]


def givens_chain(steps: Sequence[GivensStep], psi0) -> StateVector:
    """Apply the steps in order to ``psi0 = |c_1>``."""
    a = np.array(_as_array(psi0), dtype=complex)
    dim = a.size
    if steps:
        chain = [steps[0].pair[0]] + [s.pair[1] for s in steps]
        for prev, step in zip(steps, steps[1:]):
            if step.pair[0] != prev.pair[1]:
                raise ContractViolation("Givens steps do not form a chain c_1 -> c_2 -> ...")
        if any(not 0 <= c < dim for c in chain) or len(set(chain)) != len(chain):
            raise ContractViolation(f"Givens labels {chain} are not distinct basis indices below {dim}")
        if abs(abs(a[chain[0]]) - 1.0) > 1e-12:
            raise ContractViolation("the Givens chain must start from |c_1>")
    for step in steps:
        a = step.apply(a)
    return StateVector(a)


def amplitudes_from_angles(phi: Sequence[float], theta: Sequence[float]) -> np.ndarray:
    """Coefficients on (c_1..c_m) produced by the chain from |c_1>."""
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    m = phi.size + 1
    mags = np.empty(m)
    run = 1.0
    for j in range(m - 1):
        mags[j] = run * np.cos(phi[j])
        run *= np.sin(phi[j])
    mags[m - 1] = run
    phases = -np.cumsum(np.concatenate([[0.0], theta[1:m]]))
    return mags * np.exp(1j * phases)


def angles_from_amplitudes(
    r: Sequence[float], zeta: Sequence[float], energies: Sequence[float], t: float
) -> tuple[np.ndarray, np.ndarray]:
    """Invert the hyperspherical amplitude map and build the phase schedule.

    ``r`` are moduli |alpha_k| (renormalized here), ``zeta`` their phases.
    Returns ``phi`` (length m-1) and ``theta`` (length m, theta[0] = 0) with
    theta_k = xi_{k-1} - xi_k and xi_k = (zeta_k - zeta_1) - (E_k - E_1) t.
    """
    r = np.asarray(r, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    energies = np.asarray(energies, dtype=float)
    m = r.size
    if zeta.size != m or energies.size != m:
        raise DimensionMismatch("r, zeta and energies must share one length")
    if np.any(r < 0):
        raise ContractViolation("amplitude moduli must be nonnegative")
    total = np.linalg.norm(r)
    if total == 0.0:
        raise UndefinedDirectionError("all-zero amplitudes define no state")
    r = r / total
    # tail[j] = || r[j:] ||; arctan2 gives pi/2 for a zero prefix and 0 for a zero suffix
    tail = np.sqrt(np.cumsum((r**2)[::-1])[::-1])
    phi = np.array([np.arctan2(tail[j + 1], r[j]) for j in range(m - 1)])
    xi = (zeta - zeta[0]) - (energies - energies[0]) * t
    theta = np.zeros(m)
    theta[1:] = xi[:-1] - xi[1:]
    return phi, theta


# --------------------------------------------------------------------------
# diagonal phases and depth
# --------------------------------------------------------------------------


def diagonal_phase_unitary(labels: Sequence[int], energies: Sequence[float], t: float, n_qubits: int) -> np.ndarray:
    """Diagonal of D(t): exp(-i E_k t) on |c_k>, 1 on every other basis state."""
    labels = [int(c) for c in labels]
    energies = np.asarray(energies, dtype=float)
    if len(set(labels)) != len(labels):
        raise ContractViolation("duplicate basis labels in the diagonal unitary")
    if energies.size != len(labels):
        raise DimensionMismatch(f"{energies.size} energies for {len(labels)} labels")
    if any(not 0 <= c < 1 << n_qubits for c in labels):
        raise ContractViolation("basis label out of range")
    diag = np.ones(1 << n_qubits, dtype=complex)
    diag[labels] = np.exp(-1j * energies * t)
    return diag


@dataclass(frozen=True)
class DepthModel:
    m: int
    n_sites: int
    n_adapt: int
    variant: Variant = "times_i"


DEPTH_PER_CONTROLLED_SU2 = 8
DEPTH_PER_ADAPT_LAYER = 11


def two_qubit_depth(d: DepthModel) -> int:
    """Upper bound 8 m (N_s - 1) + 11 N_adapt, with the ansatz counted twice for times_ii."""
    if d.m < 1 or d.n_sites < 2 or d.n_adapt < 0:
        raise ConfigError(f"invalid depth model {d}")
    copies = {"times_i": 1, "times_ii": 2}[d.variant]
    return DEPTH_PER_CONTROLLED_SU2 * d.m * (d.n_sites - 1) + copies * DEPTH_PER_ADAPT_LAYER * d.n_adapt


def back_solve_n_adapt(depth: int, m: int, n_sites: int, variant: Variant) -> int:
    """Layer count that reproduces a reported depth exactly; raises if none does."""
    copies = {"times_i": 1, "times_ii": 2}[variant]
    rest = depth - DEPTH_PER_CONTROLLED_SU2 * m * (n_sites - 1)
    n_adapt, rem = divmod(rest, copies * DEPTH_PER_ADAPT_LAYER)
    if rem or n_adapt < 0:
        raise ContractViolation(f"depth {depth} is not reachable for m={m}, N_s={n_sites}, {variant}")
    return n_adapt


def anti_hermitian_error(op: PoolOperator) -> float:
    g = op.generator
    return float(np.max(np.abs(g + g.conj().T)))


def sz_commutator_norm(mat: np.ndarray, sz: np.ndarray) -> float:
    return float(np.linalg.norm(commutator(sz, mat)))
