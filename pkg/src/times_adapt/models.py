"""Hamiltonians, observables and initial states for the XXZ experiments.

Sites are 1-based in every public signature (site ``k`` is qubit ``k - 1``);
the staggered sign is ``(-1)**k`` in that 1-based index.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Literal

import numpy as np

from .core import PauliSum, StateVector, eigendecompose, expectation
from .errors import AmbiguityError, ConfigError, ContractViolation

Boundary = Literal["open", "periodic"]
FieldPattern = Literal["none", "uniform", "staggered"]


@dataclass(frozen=True)
class XXZSpec:
    n_sites: int
    j_z: float
    h_z: float = 0.0
    boundary: Boundary = "open"
    field_pattern: FieldPattern = "none"

    def __post_init__(self):
        if self.n_sites < 2:
            raise ConfigError("an XXZ chain needs at least two sites")
        if self.boundary not in ("open", "periodic"):
            raise ConfigError(f"unknown boundary {self.boundary!r}")
        if self.field_pattern not in ("none", "uniform", "staggered"):
            raise ConfigError(f"unknown field pattern {self.field_pattern!r}")
        if self.field_pattern == "none" and self.h_z != 0.0:
            raise ConfigError("h_z must be zero when field_pattern is 'none'")

    def bonds(self) -> list[tuple[int, int]]:
        """1-based ``(k, k+1)`` pairs, wrapping ``N_s -> 1`` when periodic."""
        n = self.n_sites
        last = n if self.boundary == "periodic" else n - 1
        return [(k, k % n + 1) for k in range(1, last + 1)]

    def field_sign(self, site: int) -> float:
        if self.field_pattern == "staggered":
            return float((-1) ** site)
        if self.field_pattern == "uniform":
            return 1.0
        return 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "XXZSpec":
        return cls(
            n_sites=int(data["n_sites"]),
            j_z=float(data["j_z"]),
            h_z=float(data.get("h_z", 0.0)),
            boundary=data.get("boundary", "open"),
            field_pattern=data.get("field_pattern", "none"),
        )


def xxz(n_sites: int, j_z: float) -> XXZSpec:
    """Open chain with no field."""
    return XXZSpec(n_sites, j_z)


def lfxxz(n_sites: int, j_z: float, h_z: float) -> XXZSpec:
    """Open chain with a uniform longitudinal field."""
    return XXZSpec(n_sites, j_z, h_z, "open", "uniform")


def sfxxz(n_sites: int, j_z: float, h_z: float) -> XXZSpec:
    """Periodic chain with a staggered longitudinal field."""
    return XXZSpec(n_sites, j_z, h_z, "periodic", "staggered")


@dataclass(frozen=True)
class WavePacketSpec:
    center: int
    width: float

    def __post_init__(self):
        if self.width <= 0:
            raise ConfigError("wave-packet width must be positive")


@dataclass(frozen=True)
class PerturbationSpec:
    center: float
    sigma: float
    amplitude: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ConfigError("perturbation sigma must be positive")

    def coupling(self, k: int) -> float:
        """Unit-normalized Gaussian profile J_k (times ``amplitude``)."""
        norm = 1.0 / (self.sigma * math.sqrt(2.0 * math.pi))
        return self.amplitude * norm * math.exp(-((k - self.center) ** 2) / (2.0 * self.sigma**2))


def _bond(n: int, a: int, b: int, j_xy: float, j_z: float) -> PauliSum:
    q, r = a - 1, b - 1
    return (
        PauliSum.from_ops(n, j_xy, {q: "X", r: "X"})
        + PauliSum.from_ops(n, j_xy, {q: "Y", r: "Y"})
        + PauliSum.from_ops(n, j_z, {q: "Z", r: "Z"})
    )


def bond_term(spec: XXZSpec, k: int) -> PauliSum:
    """XX + YY + J_z ZZ on the bond starting at site ``k``."""
    return _bond(spec.n_sites, k, k % spec.n_sites + 1, 1.0, spec.j_z)


def field_term(spec: XXZSpec, k: int) -> PauliSum:
    return PauliSum.from_ops(spec.n_sites, spec.h_z * spec.field_sign(k), {k - 1: "Z"})


def build_xxz(spec: XXZSpec) -> PauliSum:
    n = spec.n_sites
    h = PauliSum(n)
    for a, _ in spec.bonds():
        h = h + bond_term(spec, a)
    if spec.field_pattern != "none":
        for k in range(1, n + 1):
            h = h + field_term(spec, k)
    return h


def total_sz(n_sites: int) -> PauliSum:
    """S_z = sum_j sigma^z_j (Pauli normalization, no factor 1/2)."""
    h = PauliSum(n_sites)
    for q in range(n_sites):
        h = h + PauliSum.from_ops(n_sites, 1.0, {q: "Z"})
    return h


def sigma_z(n_sites: int, site: int) -> PauliSum:
    return PauliSum.from_ops(n_sites, 1.0, {site - 1: "Z"})


def magnon_labels(n_sites: int) -> list[int]:
    """Basis indices of sigma^x_j |0...0>, j = 1..n_sites."""
    if n_sites < 1:
        raise ContractViolation("n_sites must be positive")
    return [1 << (j - 1) for j in range(1, n_sites + 1)]


def magnon_basis(n_sites: int) -> list[StateVector]:
    return [StateVector.basis(n_sites, c) for c in magnon_labels(n_sites)]


def gaussian_wavepacket(spec: WavePacketSpec, n_sites: int) -> StateVector:
    if not 1 <= spec.center <= n_sites:
        raise ContractViolation(f"wave-packet center {spec.center} outside 1..{n_sites}")
    sites = np.arange(1, n_sites + 1)
    profile = np.exp(-0.5 * spec.width**2 * (sites - spec.center) ** 2)
    amps = np.zeros(1 << n_sites, dtype=complex)
    amps[magnon_labels(n_sites)] = profile / np.sqrt(np.sum(profile**2))
    return StateVector(amps)


def build_perturbation(base: XXZSpec, pert: PerturbationSpec) -> PauliSum:
    """delta H: the base bond and staggered-field terms reweighted by J_k (unit J_z)."""
    n = base.n_sites
    dh = PauliSum(n)
    for a, b in base.bonds():
        jk = pert.coupling(a)
        dh = dh + _bond(n, a, b, jk, jk) + PauliSum.from_ops(n, jk * (-1) ** a, {a - 1: "Z"})
    return dh


@dataclass(frozen=True)
class PerturbedGroundState:
    state: StateVector
    sz: float
    energy: float
    gap: float


def build_perturbed_ground_state(base: XXZSpec, pert: PerturbationSpec) -> PerturbedGroundState:
    if base.field_pattern != "staggered" or base.boundary != "periodic":
        raise ContractViolation("the transport perturbation needs a periodic staggered-field chain")
    h_g = build_xxz(base) + build_perturbation(base, pert)
    spec = eigendecompose(h_g)
    gap = float(spec.energies[1] - spec.energies[0])
    if gap < 1e-10:
        raise AmbiguityError(f"perturbed Hamiltonian has a degenerate ground state (gap {gap:.3e})")
    psi = spec.vector(0)
    # fix the arbitrary eigensolver phase so repeated runs give identical output
    k = int(np.argmax(np.abs(psi.amplitudes)))
    psi = StateVector(psi.amplitudes * np.exp(-1j * np.angle(psi.amplitudes[k])))
    return PerturbedGroundState(psi, expectation(total_sz(base.n_sites), psi), float(spec.energies[0]), gap)


def energy_density(spec: XXZSpec, site: int) -> PauliSum:
    """Bond (site, site+1) plus the on-site field at ``site``.

    On a periodic chain site ``N_s + 1`` is site 1. On an open chain the last
    site carries only its field term.
    """
    n = spec.n_sites
    if not 1 <= site <= n:
        raise ContractViolation(f"site {site} outside 1..{n}")
    h = PauliSum(n)
    if spec.boundary == "periodic" or site < n:
        h = h + bond_term(spec, site)
    if spec.field_pattern != "none":
        h = h + field_term(spec, site)
    return h
