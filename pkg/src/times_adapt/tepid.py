"""Rank-m Gibbs-state training with an adaptively grown basis change.

The ensemble ``sum_k mu_k V|c_k><c_k|V^dagger`` is optimized for the free
energy ``sum_k mu_k <c_k|V^dag H V|c_k> + (1/beta) sum_k mu_k ln mu_k``. The
weights are a softmax over free logits and are optimized jointly with the
ansatz angles by BFGS; every ADAPT cycle appends the pool operator with the
largest free-energy gradient and restarts from the previous optimum.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from .ansatz import AdaptAnsatz, MatrixBasisChange, PoolOperator, make_pool, pool_hash
from .core import DensityEnsemble, PauliSum, Spectrum, StateVector, dense_matrix, von_neumann_entropy
from .errors import ConfigError, ContractViolation, InfiniteGapError, PartialResultError

log = logging.getLogger(__name__)

BasisChange = Union[AdaptAnsatz, MatrixBasisChange]


@dataclass(frozen=True)
class TepidConfig:
    beta: float
    m: int
    basis_labels: Optional[tuple[int, ...]] = None
    pool: str = "qeb"
    grad_tolerance: float = 1e-4
    opt_tolerance: float = 1e-9
    max_layers: int = 200
    max_iter: int = 2000
    variance_tolerance: float = 1e-6
    escape_grid: int = 24
    seed: int = 0
    jitter: float = 0.0
    beta_start: Optional[float] = 0.2
    anneal_stages: int = 4

    def __post_init__(self):
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if self.m < 1:
            raise ConfigError("m must be at least 1")
        if self.beta_start is not None and self.beta_start <= 0:
            raise ConfigError("beta_start must be positive")
        if self.anneal_stages < 1:
            raise ConfigError("anneal_stages must be at least 1")
        if self.basis_labels is not None:
            labels = tuple(int(c) for c in self.basis_labels)
            if len(labels) != self.m:
                raise ConfigError(f"{len(labels)} basis labels for m={self.m}")
            if len(set(labels)) != len(labels):
                raise ConfigError("basis labels must be distinct")
            object.__setattr__(self, "basis_labels", labels)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["basis_labels"] = list(self.basis_labels) if self.basis_labels is not None else None
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TepidConfig":
        data = dict(data)
        if data.get("basis_labels") is not None:
            data["basis_labels"] = tuple(int(c) for c in data["basis_labels"])
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown tepid options {sorted(extra)}")
        return cls(**data)


def auto_labels(h: Union[PauliSum, np.ndarray], m: int) -> tuple[int, ...]:
    """The m basis states of lowest diagonal energy (ties broken by index)."""
    mat = h.matrix if isinstance(h, PauliSum) else np.asarray(h)
    diag = np.real(np.diag(mat))
    order = np.lexsort((np.arange(diag.size), np.round(diag, 12)))
    return tuple(int(c) for c in order[:m])


def sector_labels(h: Union[PauliSum, np.ndarray], sz_values: Sequence[float]) -> tuple[int, ...]:
    """One label per requested S_z value: the lowest-diagonal-energy unused
    basis state of that sector (S_z = n_qubits - 2 * popcount)."""
    mat = h.matrix if isinstance(h, PauliSum) else np.asarray(h)
    dim = mat.shape[0]
    n = dim.bit_length() - 1
    diag = np.round(np.real(np.diag(mat)), 12)
    sz = np.array([n - 2 * bin(b).count("1") for b in range(dim)])
    order = np.lexsort((np.arange(dim), diag))
    used: list[int] = []
    for s in sz_values:
        free = [int(b) for b in order if sz[b] == round(s) and b not in used]
        if not free:
            raise ConfigError(f"no basis state left in the S_z = {s} sector")
        used.append(free[0])
    return tuple(used)


def extract_gaps(weights: Sequence[float], beta: float) -> np.ndarray:
    """Delta E_k = (1/beta) ln(mu_1 / mu_k)."""
    w = np.asarray(weights, dtype=float)
    if beta <= 0:
        raise ContractViolation("beta must be positive")
    if np.any(w <= 0):
        raise InfiniteGapError("a zero weight corresponds to an infinite energy gap")
    if np.any(np.diff(w) > 1e-15 * w[0]):
        raise ContractViolation("weights must be in descending order")
    return np.log(w[0] / w) / beta


# --------------------------------------------------------------------------
# free energy and gradients
# --------------------------------------------------------------------------


class _Objective:
    """Free energy of (logits, thetas) with analytic gradients."""

    def __init__(self, hmat: np.ndarray, ref: np.ndarray, ops: Sequence[PoolOperator], beta: float):
        self.hmat = hmat
        self.ref = ref
        self.ops = list(ops)
        self.beta = beta
        self.m = ref.shape[1]

    def states(self, thetas: np.ndarray) -> np.ndarray:
        phi = self.ref.copy()
        for op, th in zip(self.ops, thetas):
            phi = op.apply(th, phi)
        return phi

    def energies(self, thetas: np.ndarray) -> np.ndarray:
        phi = self.states(thetas)
        return np.real(np.einsum("ik,ik->k", phi.conj(), self.hmat @ phi))

    def __call__(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        m = self.m
        logits, thetas = x[:m], x[m:]
        logmu = logits - logsumexp(logits)
        mu = np.exp(logmu)
        phi = self.states(thetas)
        hphi = self.hmat @ phi
        e = np.real(np.einsum("ik,ik->k", phi.conj(), hphi))
        a = e + logmu / self.beta
        value = float(mu @ a)
        grad = np.empty_like(x)
        grad[:m] = mu * (a - value)
        lam = hphi * mu
        for j in range(len(self.ops) - 1, -1, -1):
            op = self.ops[j]
            grad[m + j] = 2.0 * np.real(np.vdot(lam, op.generator @ phi))
            phi = op.apply(-thetas[j], phi)
            lam = op.apply(-thetas[j], lam)
        return value, grad


def free_energy_value(hmat: np.ndarray, states: np.ndarray, weights: np.ndarray, beta: float) -> float:
    e = np.real(np.einsum("ik,ik->k", states.conj(), hmat @ states))
    return float(weights @ e - von_neumann_entropy(weights) / beta)


def pool_gradients(hmat: np.ndarray, states: np.ndarray, weights: np.ndarray, pool: Sequence[PoolOperator]) -> np.ndarray:
    """dF/dtheta at theta = 0 for appending each pool operator last:
    sum_k mu_k <phi_k|[H, g]|phi_k> = 2 Re sum_k mu_k <H phi_k|g phi_k>."""
    lam = (hmat @ states) * weights
    return np.array([2.0 * np.real(np.vdot(lam, op.generator @ states)) for op in pool])


class AdaptChoice(NamedTuple):
    operator: Optional[PoolOperator]
    gradient: float
    gradients: np.ndarray
    converged: bool


def adapt_step(
    h: Union[PauliSum, np.ndarray],
    ensemble: DensityEnsemble,
    ansatz: BasisChange,
    pool: Sequence[PoolOperator],
    grad_tolerance: float = 1e-4,
) -> AdaptChoice:
    """Pick the pool operator with the largest |dF/dtheta| (first wins ties).

    ``ensemble`` is the reference ensemble before the basis change.
    """
    if not pool:
        raise ContractViolation("empty operator pool")
    hmat = h.matrix if isinstance(h, PauliSum) else np.asarray(h)
    ref = np.column_stack([s.amplitudes for s in ensemble.states])
    states = ansatz.apply(ref)
    grads = pool_gradients(hmat, states, np.asarray(ensemble.weights), pool)
    k = int(np.argmax(np.abs(grads)))
    best = float(abs(grads[k]))
    if best < grad_tolerance:
        return AdaptChoice(None, best, grads, True)
    return AdaptChoice(pool[k], float(grads[k]), grads, False)


# --------------------------------------------------------------------------
# trained model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainedSubspaceModel:
    """Output of :func:`train`; labels and weights are sorted by descending weight."""

    config: TepidConfig
    ansatz: BasisChange
    labels: tuple[int, ...]
    weights: np.ndarray
    delta_energies: np.ndarray
    e1: float
    n_qubits: int
    pool: Optional[str] = None
    free_energy_history: tuple[float, ...] = ()
    gradient_history: tuple[float, ...] = ()
    converged: bool = True
    warnings: tuple[str, ...] = ()
    diagnostics: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.labels)

    @property
    def energies(self) -> np.ndarray:
        return self.e1 + self.delta_energies

    @property
    def n_adapt(self) -> int:
        return self.ansatz.n_layers

    def reference_columns(self) -> np.ndarray:
        ref = np.zeros((1 << self.n_qubits, self.m), dtype=complex)
        ref[list(self.labels), np.arange(self.m)] = 1.0
        return ref

    def subspace_states(self) -> np.ndarray:
        """Columns V|c_k>, k = 1..m."""
        return self.ansatz.apply(self.reference_columns())

    def state(self, k: int) -> StateVector:
        return StateVector(self.ansatz.apply(StateVector.basis(self.n_qubits, self.labels[k]).amplitudes))

    def ensemble(self) -> DensityEnsemble:
        return DensityEnsemble.from_columns(self.weights, self.subspace_states())

    def truncate(self, m: int) -> "TrainedSubspaceModel":
        """Keep the m heaviest labels (the m lowest trained levels)."""
        if not 1 <= m <= self.m:
            raise ContractViolation(f"cannot truncate a rank-{self.m} model to {m}")
        w = self.weights[:m] / np.sum(self.weights[:m])
        cfg = TepidConfig(**{**asdict(self.config), "m": m, "basis_labels": self.labels[:m]})
        return TrainedSubspaceModel(
            cfg, self.ansatz, self.labels[:m], w, self.delta_energies[:m].copy(), self.e1, self.n_qubits,
            self.pool, self.free_energy_history, self.gradient_history, self.converged, self.warnings,
            dict(self.diagnostics, truncated_from=self.m),
        )

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        pool_ops = make_pool(self.pool, self.n_qubits) if self.pool and isinstance(self.ansatz, AdaptAnsatz) else None
        return {
            "config": self.config.to_dict(),
            "ansatz": self.ansatz.to_dict(pool_name=self.pool, pool=pool_ops),
            "labels": list(self.labels),
            "weights": self.weights.tolist(),
            "delta_energies": self.delta_energies.tolist(),
            "energies": self.energies.tolist(),
            "e1": self.e1,
            "beta": self.config.beta,
            "n_qubits": self.n_qubits,
            "n_adapt": self.n_adapt,
            "pool": self.pool,
            "seed": self.config.seed,
            "free_energy_history": list(self.free_energy_history),
            "gradient_history": list(self.gradient_history),
            "converged": self.converged,
            "warnings": list(self.warnings),
            "diagnostics": _jsonable(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainedSubspaceModel":
        n = int(data["n_qubits"])
        if data["ansatz"]["kind"] == "matrix":
            ansatz = MatrixBasisChange.from_dict(data["ansatz"])
        else:
            ansatz = AdaptAnsatz.from_dict(data["ansatz"], make_pool(data["pool"], n))
        return cls(
            TepidConfig.from_dict(data["config"]),
            ansatz,
            tuple(int(c) for c in data["labels"]),
            np.array(data["weights"], dtype=float),
            np.array(data["delta_energies"], dtype=float),
            float(data["e1"]),
            n,
            data.get("pool"),
            tuple(data.get("free_energy_history", ())),
            tuple(data.get("gradient_history", ())),
            bool(data.get("converged", True)),
            tuple(data.get("warnings", ())),
            dict(data.get("diagnostics", {})),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> "TrainedSubspaceModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


def train(
    h: PauliSum,
    cfg: TepidConfig,
    oracle: Optional[Spectrum] = None,
    target_indices: Optional[Sequence[int]] = None,
    raise_on_max_layers: bool = True,
) -> TrainedSubspaceModel:
    """Grow and optimize the basis change until the largest pool gradient
    drops below ``cfg.grad_tolerance``.

    With ``oracle`` given, per-eigenstate fidelities against the oracle levels
    ``target_indices`` (default: the m lowest) are stored in ``diagnostics``.
    """
    n = h.n_qubits
    hmat = h.matrix
    if np.max(np.abs(hmat - hmat.conj().T), initial=0.0) > 1e-12:
        raise ContractViolation("training needs a Hermitian Hamiltonian")
    labels = cfg.basis_labels if cfg.basis_labels is not None else auto_labels(h, cfg.m)
    if len(labels) > 1 << n:
        raise ConfigError(f"m={cfg.m} exceeds the Hilbert-space dimension")
    pool = make_pool(cfg.pool, n)
    rng = np.random.default_rng(cfg.seed)

    ref = np.zeros((1 << n, cfg.m), dtype=complex)
    ref[list(labels), np.arange(cfg.m)] = 1.0

    ops: list[PoolOperator] = []
    thetas = np.zeros(0)
    history: list[float] = []
    grad_history: list[float] = []
    converged = False

    def optimize(beta, logits, thetas):
        obj = _Objective(hmat, ref, ops, beta)
        x0 = np.concatenate([logits, thetas])
        f0 = obj(x0)[0]
        res = minimize(obj, x0, jac=True, method="BFGS", options={"gtol": cfg.opt_tolerance, "maxiter": cfg.max_iter})
        x = res.x if res.fun <= f0 else x0
        return x[: cfg.m], x[cfg.m :], float(min(res.fun, f0))

    # Excited references carry weight ~exp(-beta dE), which starves their
    # angles of gradient at low temperature. Growing the ansatz at a higher
    # temperature first and cooling in stages keeps every state trainable;
    # the optimal basis change is the same at every temperature.
    if cfg.beta_start is None or cfg.anneal_stages == 1 or cfg.beta_start >= cfg.beta:
        betas = [cfg.beta]
    else:
        betas = [float(b) for b in np.geomspace(cfg.beta_start, cfg.beta, cfg.anneal_stages)]
    logits = -betas[0] * np.real(np.diag(hmat))[list(labels)]
    prev_beta = betas[0]
    hit_limit = False
    stages: list[dict] = []
    for beta in betas:
        logits = logits * (beta / prev_beta)
        prev_beta = beta
        history = []
        stages.append({"beta": beta, "free_energies": history})
        logits, thetas, f = optimize(beta, logits, thetas)
        history.append(f)
        converged = False
        while True:
            mu = softmax(logits)
            states = _Objective(hmat, ref, ops, beta).states(thetas)
            grads = pool_gradients(hmat, states, mu, pool)
            k = int(np.argmax(np.abs(grads)))
            grad_history.append(float(abs(grads[k])))
            start = float(rng.normal(scale=cfg.jitter)) if cfg.jitter else 0.0
            variances = _variances(hmat, states)
            if np.max(variances) < cfg.variance_tolerance:
                # every V|c_k> is an eigenvector to tolerance; more layers cannot help
                converged = True
                break
            if abs(grads[k]) < cfg.grad_tolerance:
                # vanishing gradients away from eigenstates: a symmetric stationary point
                k, start, drop = _escape(hmat, states, mu, pool, cfg.escape_grid)
                if drop < 1e-10:
                    log.warning("stationary point with energy variance %.3e and no descent direction", np.max(variances))
                    converged = True
                    break
                log.debug("escaping stationary point via %s (drop %.3e)", pool[k].label, drop)
            if len(ops) >= cfg.max_layers:
                hit_limit = True
                break
            ops.append(pool[k])
            logits, thetas, f = optimize(beta, logits, np.append(thetas, start))
            history.append(f)
            log.debug("beta %.3g layer %d: %s |grad|=%.3e F=%.12f", beta, len(ops), pool[k].label, abs(grads[k]), f)
        if hit_limit:
            if beta != cfg.beta:
                logits = logits * (cfg.beta / beta)
                logits, thetas, f = optimize(cfg.beta, logits, thetas)
                history = [f]
                stages.append({"beta": cfg.beta, "free_energies": history})
            break

    model = _finalize(h, cfg, labels, ops, logits, thetas, history, grad_history, converged, n)
    if len(stages) > 1:
        # free energies at different temperatures are not comparable; keep each schedule stage apart
        model = replace(model, diagnostics={**model.diagnostics, "anneal_stages": stages})
    if oracle is not None:
        model = attach_oracle_diagnostics(model, oracle, target_indices)
    if not converged and raise_on_max_layers:
        raise PartialResultError(
            f"max_layers={cfg.max_layers} reached with pool gradient {grad_history[-1]:.3e}", model
        )
    return model


def _finalize(h, cfg, labels, ops, logits, thetas, history, grad_history, converged, n) -> TrainedSubspaceModel:
    mu = softmax(logits)
    order = sorted(range(cfg.m), key=lambda k: (-mu[k], k))
    labels_sorted = tuple(int(labels[k]) for k in order)
    weights = mu[order]
    ansatz = AdaptAnsatz(n, tuple((op, float(t)) for op, t in zip(ops, thetas)))
    c1 = StateVector.basis(n, labels_sorted[0]).amplitudes
    phi1 = ansatz.apply(c1)
    e1 = float(np.real(np.vdot(phi1, h.matrix @ phi1)))
    return TrainedSubspaceModel(
        config=cfg,
        ansatz=ansatz,
        labels=labels_sorted,
        weights=weights,
        delta_energies=extract_gaps(weights, cfg.beta),
        e1=e1,
        n_qubits=n,
        pool=cfg.pool,
        free_energy_history=tuple(history),
        gradient_history=tuple(grad_history),
        converged=converged,
    )


def _variances(hmat: np.ndarray, states: np.ndarray) -> np.ndarray:
    hphi = hmat @ states
    e = np.real(np.einsum("ik,ik->k", states.conj(), hphi))
    return np.real(np.einsum("ik,ik->k", hphi.conj(), hphi)) - e**2


def _escape(hmat, states, mu, pool, n_grid: int) -> tuple[int, float, float]:
    """Best single-operator line search: (pool index, angle, free-energy drop)."""
    grid = np.linspace(-np.pi / 2, np.pi / 2, n_grid, endpoint=False) + np.pi / (2 * n_grid)
    base = float(mu @ np.real(np.einsum("ik,ik->k", states.conj(), hmat @ states)))
    best = (0, 0.0, 0.0)
    for i, op in enumerate(pool):
        for th in grid:
            phi = op.apply(th, states)
            val = float(mu @ np.real(np.einsum("ik,ik->k", phi.conj(), hmat @ phi)))
            if base - val > best[2]:
                best = (i, float(th), base - val)
    return best


def energy_variances(model: TrainedSubspaceModel, h: PauliSum) -> np.ndarray:
    """<H^2> - <H>^2 for each V|c_k>."""
    phi = model.subspace_states()
    hphi = h.matrix @ phi
    e = np.real(np.einsum("ik,ik->k", phi.conj(), hphi))
    e2 = np.real(np.einsum("ik,ik->k", hphi.conj(), hphi))
    return e2 - e**2


def level_fidelities(states: np.ndarray, oracle: Spectrum, target_indices: Sequence[int], tol: float = 1e-8) -> np.ndarray:
    """Weight of each column in its target oracle level.

    Column k is compared with the eigenspace spanned by the target eigenvectors
    degenerate (within ``tol``) with ``target_indices[k]``.
    """
    target_indices = list(target_indices)
    out = np.empty(len(target_indices))
    for k, idx in enumerate(target_indices):
        level = [j for j in target_indices if abs(oracle.energies[j] - oracle.energies[idx]) < tol]
        proj = oracle.eigenvectors[:, level].conj().T @ states[:, k]
        out[k] = float(np.sum(np.abs(proj) ** 2))
    return out


def attach_oracle_diagnostics(
    model: TrainedSubspaceModel, oracle: Spectrum, target_indices: Optional[Sequence[int]] = None
) -> TrainedSubspaceModel:
    idx = list(range(model.m)) if target_indices is None else list(target_indices)
    fids = level_fidelities(model.subspace_states(), oracle, idx)
    exact_gaps = oracle.energies[idx] - oracle.energies[idx[0]]
    notes = list(model.warnings)
    above = [j for j in range(oracle.dim) if j not in idx and oracle.energies[j] >= oracle.energies[idx[-1]] - 1e-10]
    if above and abs(oracle.energies[min(above)] - oracle.energies[idx[-1]]) < 1e-8:
        msg = "target subspace boundary is degenerate; the subspace is not uniquely defined"
        notes.append(msg)
        warnings.warn(msg, stacklevel=2)
    diag = dict(model.diagnostics)
    diag.update(
        eigenstate_fidelities=fids.tolist(),
        oracle_gaps=exact_gaps.tolist(),
        gap_errors=(model.delta_energies - exact_gaps).tolist(),
        target_indices=idx,
    )
    return TrainedSubspaceModel(
        model.config, model.ansatz, model.labels, model.weights, model.delta_energies, model.e1, model.n_qubits,
        model.pool, model.free_energy_history, model.gradient_history, model.converged, tuple(notes), diag,
    )


def oracle_model(
    h: PauliSum,
    oracle: Spectrum,
    labels: Sequence[int],
    target_indices: Optional[Sequence[int]] = None,
    beta: float = 2.0,
) -> TrainedSubspaceModel:
    """Model whose basis change maps |c_k> exactly onto oracle eigenvector
    ``target_indices[k]``; the weights are the exact Boltzmann weights."""
    labels = [int(c) for c in labels]
    m = len(labels)
    idx = list(range(m)) if target_indices is None else [int(j) for j in target_indices]
    dim = oracle.dim
    n = dim.bit_length() - 1
    # permutation: label c_k -> eigen index idx[k]; remaining basis states fill remaining eigen indices
    perm = np.empty(dim, dtype=int)
    perm[labels] = idx
    rest_basis = [b for b in range(dim) if b not in set(labels)]
    rest_eig = [j for j in range(dim) if j not in set(idx)]
    perm[rest_basis] = rest_eig
    unitary = oracle.eigenvectors[:, perm]
    energies = oracle.energies[idx]
    logw = -beta * (energies - energies[0])
    weights = np.exp(logw - logsumexp(logw))
    cfg = TepidConfig(beta=beta, m=m, basis_labels=tuple(labels), pool="oracle")
    return TrainedSubspaceModel(
        cfg, MatrixBasisChange(unitary), tuple(labels), weights, energies - energies[0], float(energies[0]), n,
        None, diagnostics={"target_indices": idx, "oracle": True},
    )


def sector_indices(oracle: Spectrum, labels: Sequence[int]) -> list[int]:
    """Oracle eigenvectors living (weight > 1/2) on the span of ``labels``, by energy."""
    weights = np.sum(np.abs(oracle.eigenvectors[list(labels), :]) ** 2, axis=0)
    return [int(j) for j in np.flatnonzero(weights > 0.5)]
