"""Trajectory CSV and manifest JSON files.

Trajectories are long-format CSV with one row per (step, site) and the
columns ``step, site, z, rho, f1, f2``. Floats are written with 17
significant digits so every double survives a round trip exactly.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .lattice import LatticeConfig, Trajectory

__all__ = [
    "TRAJECTORY_COLUMNS",
    "TrajectoryFormatError",
    "fmt",
    "write_trajectory",
    "read_trajectory",
    "write_table",
    "write_json",
]

TRAJECTORY_COLUMNS = ("step", "site", "z", "rho", "f1", "f2")


class TrajectoryFormatError(ValueError):
    """A trajectory file is missing, malformed or inconsistent."""


def fmt(x) -> str:
    return format(float(x), ".17g")


def write_table(path, header, rows) -> Path:
    """CSV with a header row; float cells use :func:`fmt`."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, (int, str)) else fmt(c) for c in row])
    return path


def write_trajectory(path, traj: Trajectory) -> Path:
    z = traj.cfg.positions
    rows = (
        (t, n, z[n], traj.rho[t, n], traj.f1[t, n], traj.f2[t, n])
        for t in range(len(traj))
        for n in range(traj.cfg.n_sites)
    )
    return write_table(path, TRAJECTORY_COLUMNS, rows)


def read_trajectory(path, dt: float = 1.0) -> Trajectory:
    """Load a file written by :func:`write_trajectory`.

    Rows may come in any order but must cover every (step, site) pair of a
    rectangular grid exactly once.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = [r for r in reader if r]
    except OSError as exc:
        raise TrajectoryFormatError(f"cannot read {path}: {exc.strerror}") from exc
    if header is None or tuple(h.strip() for h in header) != TRAJECTORY_COLUMNS:
        raise TrajectoryFormatError(f"{path}: expected header {','.join(TRAJECTORY_COLUMNS)}")
    if not rows:
        raise TrajectoryFormatError(f"{path}: trajectory is empty")
    try:
        data = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise TrajectoryFormatError(f"{path}: non-numeric value ({exc})") from exc
    if data.shape[1] != len(TRAJECTORY_COLUMNS):
        raise TrajectoryFormatError(f"{path}: rows must have {len(TRAJECTORY_COLUMNS)} columns")

    steps, sites = data[:, 0].astype(int), data[:, 1].astype(int)
    n_steps, n_sites = steps.max() + 1, sites.max() + 1
    if steps.min() < 0 or sites.min() < 0 or len(data) != n_steps * n_sites:
        raise TrajectoryFormatError(
            f"{path}: {len(data)} rows do not form a complete {n_steps} x {n_sites} grid"
        )
    grid = np.full((n_steps, n_sites, 4), np.nan)
    grid[steps, sites] = data[:, 2:]
    if np.isnan(grid).any():
        raise TrajectoryFormatError(f"{path}: duplicate or missing (step, site) rows")

    z = grid[0, :, 0]
    dz = z[1] - z[0] if n_sites > 1 else 1.0
    if n_sites < 2 or not dz > 0 or not np.allclose(np.diff(z), dz, rtol=1e-12, atol=0):
        raise TrajectoryFormatError(f"{path}: site positions are not an evenly spaced lattice")
    cfg = LatticeConfig(n_sites, dz=float(dz), dt=dt)
    return Trajectory(rho=grid[..., 1], f1=grid[..., 2], f2=grid[..., 3], cfg=cfg)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return None if math.isnan(x) or math.isinf(x) else x
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, obj) -> Path:
    """Deterministic JSON: sorted keys, NaN and inf written as null."""
    path = Path(path)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
    return path
