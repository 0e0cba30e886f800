"""Experiment configuration: TOML in, TOML out.

Example::

    experiment = "fig3_uniform"
    seed = 0
    variants = ["times_i", "times_ii"]
    m_trained = [1, 2, 3, 4, 5]

    [time]
    t_max = 10.0
    n_points = 201

    [model]
    n_sites = 6
    j_z = 1.5

    [tepid]
    beta = 2.0
    m = 5

    [labels]
    mode = "sector"
    sz = [0, 0, 2, -2, 0]
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..errors import ConfigError
from ..models import PerturbationSpec, WavePacketSpec, XXZSpec, lfxxz, sfxxz, xxz
from ..tepid import TepidConfig

EXPERIMENTS = ("fig3_random_a", "fig3_random_b", "fig3_uniform", "fig3_boltzmann", "wavepacket", "transport", "custom")
VARIANTS = ("times_i", "times_ii")
LABEL_MODES = ("explicit", "auto", "sector", "magnon")


@dataclass(frozen=True)
class LabelRule:
    """How the reference basis labels are chosen when the tepid block omits them.

    ``sector`` takes, for each listed S_z value, the lowest-diagonal-energy
    basis state of that sector; ``magnon`` takes the one-flip states.
    """

    mode: str = "auto"
    sz: tuple[int, ...] = ()

    def __post_init__(self):
        if self.mode not in LABEL_MODES:
            raise ConfigError(f"unknown label mode {self.mode!r}; expected one of {LABEL_MODES}")
        if self.mode == "sector" and not self.sz:
            raise ConfigError("label mode 'sector' needs an sz list")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    model: XXZSpec
    tepid: TepidConfig
    labels: LabelRule = field(default_factory=LabelRule)
    variants: tuple[str, ...] = VARIANTS
    m_trained: tuple[int, ...] = ()
    t_max: float = 10.0
    n_points: int = 201
    seed: int = 0
    out_dir: str = "out"
    wavepacket: Optional[WavePacketSpec] = None
    perturbation: Optional[PerturbationSpec] = None
    trotter_depth: Optional[int] = None
    restarts: int = 8

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        bad = [v for v in self.variants if v not in VARIANTS]
        if bad or not self.variants:
            raise ConfigError(f"variants must be a non-empty subset of {VARIANTS}")
        if self.t_max <= 0 or self.n_points < 2:
            raise ConfigError("the time grid needs t_max > 0 and at least two points")
        if any(not 1 <= m <= self.tepid.m for m in self.m_trained):
            raise ConfigError(f"m_trained entries must lie in 1..{self.tepid.m}")
        if self.model.n_sites > 14:
            raise ConfigError("dense simulation is limited to 14 sites")

    @property
    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_points)

    @property
    def m_sweep(self) -> tuple[int, ...]:
        return self.m_trained or (self.tepid.m,)

    def to_dict(self) -> dict:
        d: dict = {
            "experiment": self.experiment,
            "seed": self.seed,
            "variants": list(self.variants),
            "m_trained": list(self.m_trained),
            "out_dir": self.out_dir,
            "restarts": self.restarts,
            "time": {"t_max": self.t_max, "n_points": self.n_points},
            "model": self.model.to_dict(),
            "tepid": {k: v for k, v in self.tepid.to_dict().items() if v is not None},
            "labels": {"mode": self.labels.mode, "sz": list(self.labels.sz)},
        }
        if self.trotter_depth is not None:
            d["trotter_depth"] = self.trotter_depth
        if self.wavepacket is not None:
            d["wavepacket"] = {"center": self.wavepacket.center, "width": self.wavepacket.width}
        if self.perturbation is not None:
            p = self.perturbation
            d["perturbation"] = {"center": p.center, "sigma": p.sigma, "amplitude": p.amplitude}
        return d

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def with_overrides(self, seed: Optional[int] = None, out_dir: Optional[str] = None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed), tepid=replace(cfg.tepid, seed=int(seed)))
        if out_dir is not None:
            cfg = replace(cfg, out_dir=str(out_dir))
        return cfg


def from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    known = {
        "experiment", "seed", "variants", "m_trained", "out_dir", "restarts", "time", "model", "tepid", "labels",
        "trotter_depth", "wavepacket", "perturbation",
    }
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown configuration keys {sorted(extra)}")
    if "experiment" not in data:
        raise ConfigError("configuration needs an 'experiment' key")
    base = default_config(data["experiment"])
    try:
        model = XXZSpec.from_dict(data["model"]) if "model" in data else base.model
        tepid = base.tepid
        if "tepid" in data:
            tdata = {**base.tepid.to_dict(), **data["tepid"]}
            if "basis_labels" not in data["tepid"] and "m" in data["tepid"]:
                tdata["basis_labels"] = None
            tepid = TepidConfig.from_dict(tdata)
        labels = base.labels
        if "labels" in data:
            ldata = data["labels"]
            labels = LabelRule(ldata.get("mode", "auto"), tuple(int(s) for s in ldata.get("sz", ())))
        time = {"t_max": base.t_max, "n_points": base.n_points, **data.get("time", {})}
        wp = base.wavepacket
        if "wavepacket" in data:
            wp = WavePacketSpec(int(data["wavepacket"]["center"]), float(data["wavepacket"]["width"]))
        pert = base.perturbation
        if "perturbation" in data:
            p = data["perturbation"]
            pert = PerturbationSpec(float(p["center"]), float(p["sigma"]), float(p.get("amplitude", 1.0)))
        seed = int(data.get("seed", base.seed))
        return ExperimentConfig(
            experiment=data["experiment"],
            model=model,
            tepid=tepid,
            labels=labels,
            variants=tuple(data.get("variants", base.variants)),
            m_trained=tuple(int(m) for m in data.get("m_trained", base.m_trained)),
            t_max=float(time["t_max"]),
            n_points=int(time["n_points"]),
            seed=seed,
            out_dir=str(data.get("out_dir", base.out_dir)),
            wavepacket=wp,
            perturbation=pert,
            trotter_depth=data.get("trotter_depth", base.trotter_depth),
            restarts=int(data.get("restarts", base.restarts)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed configuration: {exc}") from exc


def loads(text: str) -> ExperimentConfig:
    try:
        return from_dict(tomllib.loads(text))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return loads(text)


def dumps(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


def default_config(experiment: str) -> ExperimentConfig:
    """Built-in settings for each experiment family."""
    if experiment.startswith("fig3") or experiment == "custom":
        return ExperimentConfig(
            experiment=experiment,
            model=xxz(6, 1.5),
            tepid=TepidConfig(beta=2.0, m=5),
            labels=LabelRule("sector", (0, 0, 2, -2, 0)),
            m_trained=(1, 2, 3, 4, 5),
        )
    if experiment == "wavepacket":
        return ExperimentConfig(
            experiment=experiment,
            model=lfxxz(7, -1.5, 0.25),
            tepid=TepidConfig(beta=2.0, m=7),
            labels=LabelRule("magnon"),
            variants=("times_i",),
            wavepacket=WavePacketSpec(4, 1.0),
            trotter_depth=413,
        )
    if experiment == "transport":
        return ExperimentConfig(
            experiment=experiment,
            model=sfxxz(7, 1.5, 0.5),
            tepid=TepidConfig(beta=2.0, m=4, max_layers=300),
            labels=LabelRule("sector", (1, -1, -1, 1)),
            variants=("times_ii",),
            perturbation=PerturbationSpec(4.0, 1.0),
            trotter_depth=1534,
        )
    raise ConfigError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
