"""Write an EvolutionResult as CSV traces plus a JSON manifest."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .experiments import EvolutionResult


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def emit(result: EvolutionResult, out_dir) -> list[Path]:
    """One ``<trace>.csv`` per trace and ``manifest.json``; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for tr in result.traces:
        path = out / f"{tr.name}.csv"
        names = list(tr.columns)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", *names])
            for i, t in enumerate(tr.t):
                w.writerow([_fmt(t), *(_fmt(tr.columns[c][i]) for c in names)])
        written.append(path)
    manifest = dict(result.manifest)
    manifest["traces"] = {tr.name: f"{tr.name}.csv" for tr in result.traces}
    path = out / "manifest.json"
    path.write_text(json.dumps(_clean(manifest), indent=2, sort_keys=True) + "\n")
    written.append(path)
    return written


def read_trace(path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    return body[:, 0], {name: body[:, i] for i, name in enumerate(header[1:], start=1)}
