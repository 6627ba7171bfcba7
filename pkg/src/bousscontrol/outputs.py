"""Result persistence with a checksummed manifest.

Everything written here is a pure function of the run (no timestamps, no
host information), so identical configs and seeds give byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .grid import GAMMA1, GAMMA2, BoundaryFunction, write_boundary_csv
from .state import write_checkpoint


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_table_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(x) if isinstance(x, (int, np.integer)) else repr(float(x)) for x in row) + "\n")
    return path


def write_boundary_pair(out, prefix, a1, a2, domain, time) -> list:
    """Dump a pair of per-interval boundary arrays on Gamma1 and Gamma2 as
    ``<prefix>1.csv`` and ``<prefix>2.csv`` (times = right interval ends)."""
    t = time.times[1:]
    return [write_boundary_csv(Path(out) / f"{prefix}1.csv", BoundaryFunction(domain, GAMMA1, a1, times=t)),
            write_boundary_csv(Path(out) / f"{prefix}2.csv", BoundaryFunction(domain, GAMMA2, a2, times=t))]


def write_outputs(out_dir, config=None, trajectory=None, controls=None, report=None, adjoint=None,
                  gradient=None, tables=None, documents=None) -> dict:
    """Write run artefacts and ``manifest.json`` (every file with its sha256).

    ``tables`` maps file names to ``(header, rows)``; ``documents`` maps file
    names to JSON-serialisable objects.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    if config is not None:
        write_json(out / "config.json", getattr(config, "data", config))
    if trajectory is not None:
        write_checkpoint(trajectory, out / "fields")
        d, tg = trajectory.domain, trajectory.time
        rows = [(n, tg.times[n], trajectory.kinetic[n], trajectory.thermal[n], trajectory.max_div[n],
                 trajectory.cfl[n - 1] if n > 0 else 0.0) for n in range(tg.nt + 1)]
        write_table_csv(out / "diagnostics.csv", ["step", "t", "kinetic", "thermal", "max_div", "cfl"], rows)
    if controls is not None:
        base = trajectory if trajectory is not None else getattr(adjoint, "base", None)
        if base is None:
            raise ValueError("controls need a trajectory or adjoint to fix the grids")
        write_boundary_pair(out, "v", controls.v1, controls.v2, base.domain, base.time)
    if adjoint is not None:
        write_boundary_pair(out, "s", adjoint.s1, adjoint.s2, adjoint.base.domain, adjoint.base.time)
    if gradient is not None:
        g1, g2, base = gradient
        write_boundary_pair(out, "grad_v", g1, g2, base.domain, base.time)
    if report is not None:
        report.write_convergence_csv(out / "convergence.csv")
        write_json(out / "summary.json", report.summary())
    for name, (header, rows) in (tables or {}).items():
        write_table_csv(out / name, header, rows)
    for name, obj in (documents or {}).items():
        write_json(out / name, obj)
    files = sorted(p for p in out.rglob("*") if p.is_file() and p != out / "manifest.json")
    manifest = {"files": {str(p.relative_to(out)): {"sha256": _sha256(p), "bytes": p.stat().st_size}
                          for p in files}}
    write_json(out / "manifest.json", manifest)
    return manifest
