"""Train, evolve and compare: the pipelines behind each experiment family."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .. import __version__
from ..ansatz import DepthModel, two_qubit_depth
from ..baselines import evolve_trotter, exact_trace, plan_trotter
from ..core import PauliSum, Spectrum, StateVector, eigendecompose
from ..errors import ConfigError, ContractViolation
from ..models import (
    build_perturbed_ground_state,
    build_xxz,
    energy_density,
    gaussian_wavepacket,
    magnon_labels,
    total_sz,
)
from ..tepid import TepidConfig, TrainedSubspaceModel, auto_labels, sector_indices, sector_labels, train
from ..times import (
    evolve_times_i,
    evolve_times_ii,
    find_coefficients,
    fidelity_prediction,
)
from .config import ExperimentConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Trace:
    """One CSV worth of data: a time column plus named value columns."""

    name: str
    t: np.ndarray
    columns: dict[str, np.ndarray]

    def __post_init__(self):
        for key, col in self.columns.items():
            if len(col) != len(self.t):
                raise ContractViolation(f"trace {self.name}: column {key} has {len(col)} rows for {len(self.t)} times")


@dataclass(frozen=True)
class EvolutionResult:
    config: ExperimentConfig
    traces: tuple[Trace, ...]
    manifest: dict = field(default_factory=dict)

    def trace(self, name: str) -> Trace:
        for tr in self.traces:
            if tr.name == name:
                return tr
        raise KeyError(name)


# --------------------------------------------------------------------------
# training with an on-disk cache
# --------------------------------------------------------------------------


def resolve_labels(cfg: ExperimentConfig, h: PauliSum) -> tuple[int, ...]:
    if cfg.tepid.basis_labels is not None:
        return cfg.tepid.basis_labels
    rule = cfg.labels
    if rule.mode == "magnon":
        labels = tuple(magnon_labels(cfg.model.n_sites))
    elif rule.mode == "sector":
        labels = sector_labels(h, rule.sz)
    elif rule.mode == "auto":
        labels = auto_labels(h, cfg.tepid.m)
    else:
        raise ConfigError("label mode 'explicit' needs tepid.basis_labels")
    if len(labels) != cfg.tepid.m:
        raise ConfigError(f"label rule gives {len(labels)} labels for m={cfg.tepid.m}")
    return labels


def training_key(cfg: ExperimentConfig, tepid: TepidConfig) -> str:
    payload = {"model": cfg.model.to_dict(), "tepid": tepid.to_dict(), "version": __version__}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:20]


def train_or_load(
    cfg: ExperimentConfig, h: PauliSum, oracle: Spectrum, cache_dir: Optional[Path] = None
) -> TrainedSubspaceModel:
    labels = resolve_labels(cfg, h)
    tepid = TepidConfig.from_dict({**cfg.tepid.to_dict(), "basis_labels": list(labels)})
    path = Path(cache_dir) / f"model-{training_key(cfg, tepid)}.json" if cache_dir is not None else None
    if path is not None and path.exists():
        log.info("reusing trained model %s", path)
        return TrainedSubspaceModel.load(path)
    targets = _targets_for(cfg, oracle, labels)
    model = train(h, tepid, oracle=oracle, target_indices=targets)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        model.save(path)
    return model


def _targets_for(cfg: ExperimentConfig, oracle: Spectrum, labels: Sequence[int]) -> list[int]:
    if cfg.labels.mode == "magnon":
        return sector_indices(oracle, labels)
    return list(range(cfg.tepid.m))


# --------------------------------------------------------------------------
# initial states
# --------------------------------------------------------------------------


def fig3_coefficients(cfg: ExperimentConfig, oracle: Spectrum) -> np.ndarray:
    """Eigenbasis amplitudes (full spectrum length) of the family's initial state."""
    dim, m = oracle.dim, cfg.tepid.m
    c = np.zeros(dim, dtype=complex)
    family = cfg.experiment
    if family in ("fig3_random_a", "fig3_random_b", "custom"):
        stream = {"fig3_random_a": 0, "fig3_random_b": 1, "custom": 2}[family]
        rng = np.random.default_rng([cfg.seed, stream])
        c[:m] = rng.normal(size=m) + 1j * rng.normal(size=m)
    elif family == "fig3_uniform":
        c[:m] = 1.0
    elif family == "fig3_boltzmann":
        # exp(-E_k / 2) over the whole spectrum; shifting by E_1 only changes the normalization
        c[:] = np.exp(-(oracle.energies - oracle.energies[0]) / 2.0)
    else:
        raise ConfigError(f"{family} is not a fig3 family")
    return c / np.linalg.norm(c)


def initial_state(cfg: ExperimentConfig, oracle: Spectrum) -> StateVector:
    if cfg.experiment == "wavepacket":
        return gaussian_wavepacket(cfg.wavepacket, cfg.model.n_sites)
    if cfg.experiment == "transport":
        return build_perturbed_ground_state(cfg.model, cfg.perturbation).state
    return StateVector(oracle.eigenvectors @ fig3_coefficients(cfg, oracle))


# --------------------------------------------------------------------------
# evolution helpers
# --------------------------------------------------------------------------


def _fidelities(reference: np.ndarray, states: np.ndarray) -> np.ndarray:
    return np.minimum(1.0, np.abs(np.einsum("ti,ti->t", reference.conj(), states)) ** 2)


def _times_states(variant: str, psi0: StateVector, model: TrainedSubspaceModel, t_grid, state=None) -> np.ndarray:
    if variant == "times_i":
        return np.array([evolve_times_i(state, float(t)).amplitudes for t in t_grid])
    return np.array([evolve_times_ii(psi0, model, float(t)).amplitudes for t in t_grid])


def _expectations(ops: dict[str, np.ndarray], states: np.ndarray) -> dict[str, np.ndarray]:
    return {k: np.real(np.einsum("ti,ij,tj->t", states.conj(), op, states)) for k, op in ops.items()}


def _diag_expectations(diags: dict[str, np.ndarray], states: np.ndarray) -> dict[str, np.ndarray]:
    probs = np.abs(states) ** 2
    return {k: probs @ d for k, d in diags.items()}


def _depth(model: TrainedSubspaceModel, variant: str, n_sites: int) -> int:
    return two_qubit_depth(DepthModel(model.m, n_sites, model.n_adapt, variant))


def _manifest(cfg: ExperimentConfig, model: TrainedSubspaceModel, extra: dict) -> dict:
    diag = model.diagnostics
    fids = diag.get("eigenstate_fidelities")
    return {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "model_hash": model.fingerprint(),
        "seed": cfg.seed,
        "versions": {"times_adapt": __version__, "numpy": np.__version__},
        "training": {
            "n_adapt": model.n_adapt,
            "converged": model.converged,
            "energies": model.energies.tolist(),
            "eigenstate_fidelities": fids,
            "gap_errors": diag.get("gap_errors"),
        },
        **extra,
    }


def _training_budget(model: TrainedSubspaceModel) -> Optional[float]:
    """Allowed gap between simulated and predicted fidelity from imperfect training."""
    fids = model.diagnostics.get("eigenstate_fidelities")
    if not fids:
        return None
    return float(4.0 * np.sum(1.0 - np.asarray(fids)) + 1e-6)


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------


def run_fig3(cfg: ExperimentConfig, cache_dir: Optional[Path] = None) -> EvolutionResult:
    if not cfg.experiment.startswith("fig3") and cfg.experiment != "custom":
        raise ConfigError(f"run_fig3 got a {cfg.experiment} configuration")
    h = build_xxz(cfg.model)
    oracle = eigendecompose(h)
    model = train_or_load(cfg, h, oracle, cache_dir)
    psi0 = initial_state(cfg, oracle)
    t = cfg.t_grid
    exact = exact_trace(psi0, oracle, t)
    fid_cols: dict[str, np.ndarray] = {}
    pred_cols: dict[str, np.ndarray] = {}
    depths: dict[str, int] = {}
    for m in cfg.m_sweep:
        sub = model.truncate(m) if m < model.m else model
        state = find_coefficients(psi0, sub, restarts=cfg.restarts, seed=cfg.seed)
        for variant in cfg.variants:
            key = f"m{m}_{variant}"
            fid_cols[key] = _fidelities(exact, _times_states(variant, psi0, sub, t, state))
            pred_cols[key] = fidelity_prediction(state, oracle, variant)(t)
            depths[key] = _depth(sub, variant, cfg.model.n_sites)
    deviation = max(float(np.max(np.abs(fid_cols[k] - pred_cols[k]))) for k in fid_cols)
    traces = (Trace("fidelity", t, fid_cols), Trace("prediction", t, pred_cols))
    manifest = _manifest(
        cfg, model,
        {
            "depth": depths,
            "prediction_budget": _training_budget(model),
            "prediction_max_deviation": deviation,
            "initial_state_eigenbasis_weights": (np.abs(fig3_coefficients(cfg, oracle)) ** 2).tolist(),
        },
    )
    return EvolutionResult(cfg, traces, manifest)


def _sites(n: int) -> list[str]:
    return [f"site{j}" for j in range(1, n + 1)]


def run_wavepacket(cfg: ExperimentConfig, cache_dir: Optional[Path] = None) -> EvolutionResult:
    if cfg.experiment != "wavepacket":
        raise ConfigError(f"run_wavepacket got a {cfg.experiment} configuration")
    n = cfg.model.n_sites
    h = build_xxz(cfg.model)
    oracle = eigendecompose(h)
    model = train_or_load(cfg, h, oracle, cache_dir)
    psi0 = initial_state(cfg, oracle)
    t = cfg.t_grid
    state = find_coefficients(psi0, model, restarts=cfg.restarts, seed=cfg.seed, expect_in_subspace=True)
    exact = exact_trace(psi0, oracle, t)
    times = _times_states("times_i", psi0, model, t, state)
    depth = cfg.trotter_depth or _depth(model, "times_i", n)
    plan = plan_trotter(cfg.model, cfg.t_max, depth)
    trot = evolve_trotter(plan, psi0)
    trot_exact = exact_trace(psi0, oracle, trot.times)

    sz_diag = np.real(np.diag(total_sz(n).matrix))
    site_z = {s: 1.0 - (1 - 2 * ((np.arange(1 << n) >> j) & 1)) for j, s in enumerate(_sites(n))}

    def observables(states):
        flips = _diag_expectations(site_z, states)
        extra = _diag_expectations({"sz_total": sz_diag}, states)
        extra["magnon_number"] = sum(flips.values()) / 2.0
        return {**flips, **extra}

    traces = (
        Trace("magnetization_oracle", t, observables(exact)),
        Trace("magnetization_times_i", t, observables(times)),
        Trace("magnetization_trotter", trot.times, observables(trot.states)),
        Trace("infidelity", t, {"times_i": 1.0 - _fidelities(exact, times)}),
        Trace("infidelity_trotter", trot.times, {"trotter": 1.0 - _fidelities(trot_exact, trot.states)}),
    )
    manifest = _manifest(
        cfg, model,
        {
            "depth": {"times_i": _depth(model, "times_i", n), "trotter_target": depth},
            "trotter": plan.to_dict(),
            "subspace_weight": state.subspace_weight,
        },
    )
    return EvolutionResult(cfg, traces, manifest)


def run_transport(cfg: ExperimentConfig, cache_dir: Optional[Path] = None) -> EvolutionResult:
    if cfg.experiment != "transport":
        raise ConfigError(f"run_transport got a {cfg.experiment} configuration")
    n = cfg.model.n_sites
    h = build_xxz(cfg.model)
    oracle = eigendecompose(h)
    model = train_or_load(cfg, h, oracle, cache_dir)
    ground = build_perturbed_ground_state(cfg.model, cfg.perturbation)
    psi0 = ground.state
    t = cfg.t_grid
    exact = exact_trace(psi0, oracle, t)
    times = _times_states("times_ii", psi0, model, t)
    depth = cfg.trotter_depth or _depth(model, "times_ii", n)
    plan = plan_trotter(cfg.model, cfg.t_max, depth)
    trot = evolve_trotter(plan, psi0)
    trot_exact = exact_trace(psi0, oracle, trot.times)

    dens = {s: energy_density(cfg.model, j).matrix for j, s in enumerate(_sites(n), start=1)}
    hmat = h.matrix

    def observables(states):
        out = _expectations(dens, states)
        out["total_energy"] = _expectations({"h": hmat}, states)["h"]
        return out

    state = find_coefficients(psi0, model, restarts=cfg.restarts, seed=cfg.seed)
    traces = (
        Trace("energy_density_oracle", t, observables(exact)),
        Trace("energy_density_times_ii", t, observables(times)),
        Trace("energy_density_trotter", trot.times, observables(trot.states)),
        Trace(
            "infidelity",
            t,
            {
                "times_ii": 1.0 - _fidelities(exact, times),
                "predicted_times_ii": 1.0 - fidelity_prediction(state, oracle, "times_ii")(t),
            },
        ),
        Trace("infidelity_trotter", trot.times, {"trotter": 1.0 - _fidelities(trot_exact, trot.states)}),
    )
    manifest = _manifest(
        cfg, model,
        {
            "depth": {"times_ii": _depth(model, "times_ii", n), "trotter_target": depth},
            "trotter": plan.to_dict(),
            "perturbed_ground_state": {"sz": ground.sz, "energy": ground.energy, "gap": ground.gap},
            "subspace_weight": state.subspace_weight,
        },
    )
    return EvolutionResult(cfg, traces, manifest)


def run(cfg: ExperimentConfig, cache_dir: Optional[Path] = None) -> EvolutionResult:
    if cfg.experiment == "wavepacket":
        return run_wavepacket(cfg, cache_dir)
    if cfg.experiment == "transport":
        return run_transport(cfg, cache_dir)
    return run_fig3(cfg, cache_dir)
