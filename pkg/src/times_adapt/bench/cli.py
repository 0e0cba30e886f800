"""Command-line entry point: ``times-adapt <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..baselines import evolve_trotter, exact_trace, plan_trotter, plan_with_steps
from ..core import eigendecompose
from ..errors import ConfigError, TimesAdaptError
from ..models import build_xxz
from ..times import evolve_times_i, evolve_times_ii, find_coefficients, fidelity_prediction
from . import config as config_mod
from .emit import emit
from .experiments import EvolutionResult, Trace, _fidelities, _manifest, initial_state, run, train_or_load

EXIT_ERROR = 1
EXIT_USAGE = 2


def _t_grid(args, cfg) -> np.ndarray:
    if getattr(args, "t", None) is not None:
        return np.array([float(args.t)])
    if getattr(args, "t_grid", None):
        try:
            start, stop, num = args.t_grid.split(":")
            grid = np.linspace(float(start), float(stop), int(num))
        except ValueError as exc:
            raise ConfigError(f"--t-grid expects start:stop:count, got {args.t_grid!r}") from exc
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise ConfigError("--t-grid must be strictly increasing")
        return grid
    return cfg.t_grid


def _load_config(args) -> config_mod.ExperimentConfig:
    if args.config:
        cfg = config_mod.load(args.config)
    else:
        cfg = config_mod.default_config(args.experiment or getattr(args, "default_experiment", "fig3_uniform"))
    return cfg.with_overrides(seed=args.seed, out_dir=args.out)


def _out_dir(args, cfg) -> Path:
    return Path(args.out) if args.out else Path(cfg.out_dir)


def _cache(args) -> Optional[Path]:
    return Path(args.cache_dir) if args.cache_dir else None


def cmd_experiment(args) -> dict:
    cfg = _load_config(args)
    result = run(cfg, _cache(args))
    paths = emit(result, _out_dir(args, cfg))
    return {"written": [str(p) for p in paths]}


def cmd_train(args) -> dict:
    cfg = _load_config(args)
    h = build_xxz(cfg.model)
    model = train_or_load(cfg, h, eigendecompose(h), _cache(args))
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "model.json"
    model.save(path)
    return {
        "model": str(path),
        "n_adapt": model.n_adapt,
        "energies": model.energies.tolist(),
        "eigenstate_fidelities": model.diagnostics.get("eigenstate_fidelities"),
    }


def _pipeline(args):
    cfg = _load_config(args)
    h = build_xxz(cfg.model)
    oracle = eigendecompose(h)
    return cfg, oracle, initial_state(cfg, oracle)


def cmd_evolve(args) -> dict:
    cfg, oracle, psi0 = _pipeline(args)
    h = build_xxz(cfg.model)
    model = train_or_load(cfg, h, oracle, _cache(args))
    t = _t_grid(args, cfg)
    exact = exact_trace(psi0, oracle, t)
    if args.variant == "i":
        state = find_coefficients(psi0, model, restarts=cfg.restarts, seed=cfg.seed)
        states = np.array([evolve_times_i(state, float(x)).amplitudes for x in t])
        name = "times_i"
    else:
        states = np.array([evolve_times_ii(psi0, model, float(x)).amplitudes for x in t])
        name = "times_ii"
    trace = Trace(f"fidelity_{name}", t, {name: _fidelities(exact, states)})
    paths = emit(EvolutionResult(cfg, (trace,), _manifest(cfg, model, {})), _out_dir(args, cfg))
    return {"written": [str(p) for p in paths]}


def cmd_predict(args) -> dict:
    cfg, oracle, psi0 = _pipeline(args)
    model = train_or_load(cfg, build_xxz(cfg.model), oracle, _cache(args))
    state = find_coefficients(psi0, model, restarts=cfg.restarts, seed=cfg.seed)
    t = _t_grid(args, cfg)
    cols = {v: fidelity_prediction(state, oracle, v)(t) for v in cfg.variants}
    paths = emit(EvolutionResult(cfg, (Trace("prediction", t, cols),), _manifest(cfg, model, {})), _out_dir(args, cfg))
    return {"written": [str(p) for p in paths]}


def cmd_trotter(args) -> dict:
    cfg, oracle, psi0 = _pipeline(args)
    if args.steps is not None:
        plan = plan_with_steps(cfg.model, cfg.t_max, args.steps)
    else:
        depth = args.depth or cfg.trotter_depth
        if depth is None:
            raise ConfigError("give --depth, --steps or trotter_depth in the configuration")
        plan = plan_trotter(cfg.model, cfg.t_max, depth)
    trace = evolve_trotter(plan, psi0)
    fid = _fidelities(exact_trace(psi0, oracle, trace.times), trace.states)
    tr = Trace("infidelity_trotter", trace.times, {"trotter": 1.0 - fid})
    manifest = {"config": cfg.to_dict(), "config_hash": cfg.config_hash(), "seed": cfg.seed, "trotter": plan.to_dict()}
    paths = emit(EvolutionResult(cfg, (tr,), manifest), _out_dir(args, cfg))
    return {"written": [str(p) for p in paths], **plan.to_dict()}


def cmd_exact(args) -> dict:
    cfg, oracle, psi0 = _pipeline(args)
    t = _t_grid(args, cfg)
    states = exact_trace(psi0, oracle, t)
    probs = np.abs(states) ** 2
    n = cfg.model.n_sites
    cols = {f"site{j + 1}": probs @ (1.0 - 2.0 * ((np.arange(1 << n) >> j) & 1)) for j in range(n)}
    manifest = {"config": cfg.to_dict(), "config_hash": cfg.config_hash(), "seed": cfg.seed,
                "lowest_energies": oracle.energies[:8].tolist()}
    paths = emit(EvolutionResult(cfg, (Trace("sigma_z_oracle", t, cols),), manifest), _out_dir(args, cfg))
    return {"written": [str(p) for p in paths]}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="times-adapt", description="Fixed-depth subspace time evolution experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, default_experiment="fig3_uniform"):
        p.add_argument("--config", help="TOML experiment configuration")
        p.add_argument("--experiment", help=f"built-in configuration when --config is absent (default {default_experiment})")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--cache-dir", help="directory for trained models, reused across runs")
        p.set_defaults(default_experiment=default_experiment)
        return p

    for name, default in (("fig3", "fig3_uniform"), ("wavepacket", "wavepacket"), ("transport", "transport")):
        common(sub.add_parser(name, help=f"run the {name} experiment"), default).set_defaults(func=cmd_experiment)

    common(sub.add_parser("train", help="train a subspace model")).set_defaults(func=cmd_train)

    for name, func in (("evolve", cmd_evolve), ("predict", cmd_predict), ("exact", cmd_exact)):
        p = common(sub.add_parser(name, help=f"{name} the configured initial state"))
        p.add_argument("--t", type=float, help="single time")
        p.add_argument("--t-grid", help="start:stop:count")
        if name == "evolve":
            p.add_argument("--variant", choices=("i", "ii"), default="ii")
        p.set_defaults(func=func)

    p = common(sub.add_parser("trotter", help="depth-matched first-order Trotter evolution"))
    p.add_argument("--depth", type=int, help="two-qubit depth budget")
    p.add_argument("--steps", type=int, help="explicit step count (overrides --depth)")
    p.set_defaults(func=cmd_trotter)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    if args.command in ("fig3", "wavepacket", "transport") and not args.experiment and not args.config:
        args.experiment = args.default_experiment
    try:
        summary = args.func(args)
    except TimesAdaptError as exc:
        print(json.dumps({"error": exc.to_dict()}), file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, ConfigError) else EXIT_ERROR
    except OSError as exc:
        print(json.dumps({"error": {"code": "io_error", "message": str(exc)}}), file=sys.stderr)
        return EXIT_ERROR
    print(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
