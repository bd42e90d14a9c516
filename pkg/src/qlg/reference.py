"""Classical and analytic references for the lattice-gas diffusion run.

The discrete oracle is the two-neighbour average the lattice update must
reproduce. The continuum reference is the periodic heat kernel (a wrapped
Gaussian) with transport coefficient ``dz**2 / (2 dt)``.

Spatial spread on a ring is measured about the circular mean. For a field
``rho`` on sites ``z_n`` with period ``L``::

    theta_n = 2 pi z_n / L
    c       = L / (2 pi) * arg( sum_n rho_n exp(i theta_n) )
    d_n     = ((z_n - c + L/2) mod L) - L/2
    var     = sum_n rho_n d_n**2 / sum_n rho_n

which agrees with the ordinary variance whenever the field is negligible
half a period away from its centre.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lattice import LatticeConfig, Trajectory

__all__ = [
    "ContinuumParams",
    "GaussianProfile",
    "UniformProfile",
    "FitError",
    "classical_average_step",
    "classical_run",
    "finite_difference_residual",
    "continuum_solution",
    "periodic_moments",
    "fit_diffusion_coefficient",
    "rms_displacement",
]

IMAGE_SUM_TOL = 1e-14
MAX_IMAGES = 1_000_000


class FitError(ValueError):
    """Raised when a trajectory cannot support a diffusion-coefficient fit."""


@dataclass(frozen=True)
class ContinuumParams:
    diffusion_coefficient: float
    period: float

    def __post_init__(self):
        if not self.diffusion_coefficient > 0:
            raise ValueError("diffusion coefficient must be positive")
        if not self.period > 0:
            raise ValueError("period must be positive")

    @classmethod
    def from_lattice(cls, cfg: LatticeConfig) -> "ContinuumParams":
        return cls(cfg.diffusion_coefficient, cfg.length)


@dataclass(frozen=True)
class GaussianProfile:
    """Gaussian of total ``mass`` (density integrated over length).

    ``sigma = 0`` is a point mass; it can only be evaluated for ``t > 0``.
    """

    center: float
    sigma: float
    mass: float = 1.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


@dataclass(frozen=True)
class UniformProfile:
    level: float


def classical_average_step(rho) -> np.ndarray:
    """rho'(z) = (rho(z + dz) + rho(z - dz)) / 2 with periodic indices."""
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 1 or rho.size == 0:
        raise ValueError("density must be a non-empty 1-D array")
    return 0.5 * (np.roll(rho, -1) + np.roll(rho, 1))


def classical_run(rho0, steps: int) -> np.ndarray:
    """Frames ``0..steps`` of repeated :func:`classical_average_step`."""
    frames = [np.asarray(rho0, dtype=float)]
    for _ in range(steps):
        frames.append(classical_average_step(frames[-1]))
    return np.stack(frames)


def finite_difference_residual(rho_t, rho_next) -> np.ndarray:
    """Per-site residual of the explicit finite-difference diffusion update.

    Returns ``(rho_next - rho_t) - (rho(z+dz) - 2 rho(z) + rho(z-dz)) / 2``,
    which vanishes exactly when ``rho_next`` is the neighbour average.
    """
    rho_t = np.asarray(rho_t, dtype=float)
    rho_next = np.asarray(rho_next, dtype=float)
    if rho_t.shape != rho_next.shape:
        raise ValueError(f"length mismatch: {rho_t.shape} vs {rho_next.shape}")
    laplacian = np.roll(rho_t, -1) - 2.0 * rho_t + np.roll(rho_t, 1)
    return (rho_next - rho_t) - 0.5 * laplacian


def _wrapped_gaussian(z, center, var, mass, period):
    z = np.asarray(z, dtype=float)
    d = np.mod(z - center + 0.5 * period, period) - 0.5 * period
    norm = mass / math.sqrt(2.0 * math.pi * var)
    total = norm * np.exp(-0.5 * d**2 / var)
    for k in range(1, MAX_IMAGES):
        term = norm * (
            np.exp(-0.5 * (d + k * period) ** 2 / var)
            + np.exp(-0.5 * (d - k * period) ** 2 / var)
        )
        total = total + term
        # images beyond the kernel width can still be growing; stop only
        # once they are past the peak and below tolerance
        if k * period > math.sqrt(var) and np.max(term) < IMAGE_SUM_TOL:
            break
    else:  # pragma: no cover - would need sigma ~ 1e5 periods
        raise RuntimeError("wrapped Gaussian image sum did not converge")
    return total


def continuum_solution(profile, t: float, params: ContinuumParams, z) -> np.ndarray:
    """Periodic heat-kernel solution at time ``t`` sampled at positions ``z``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    z = np.asarray(z, dtype=float)
    if isinstance(profile, UniformProfile):
        return np.full(z.shape, float(profile.level))
    if isinstance(profile, GaussianProfile):
        var = profile.sigma**2 + 2.0 * params.diffusion_coefficient * t
        if var == 0:
            raise ValueError("a point mass has no pointwise value at t = 0")
        return _wrapped_gaussian(z, profile.center, var, profile.mass, params.period)
    raise TypeError(f"unsupported profile {profile!r}")


def periodic_moments(rho, cfg: LatticeConfig) -> tuple[float, float]:
    """Circular-mean centre and periodic variance of a density field."""
    rho = np.asarray(rho, dtype=float)
    z = cfg.positions
    L = cfg.length
    total = rho.sum()
    if total <= 0:
        raise FitError("field has no mass")
    resultant = np.sum(rho * np.exp(2j * np.pi * z / L)) / total
    if abs(resultant) < 1e-9:
        raise FitError("field has no well-defined centre (uniform or symmetric about the ring)")
    center = (L * np.angle(resultant) / (2.0 * np.pi)) % L
    d = np.mod(z - center + 0.5 * L, L) - 0.5 * L
    return float(center), float(np.sum(rho * d**2) / total)


def fit_diffusion_coefficient(
    trajectory,
    cfg: LatticeConfig | None = None,
    frames: Sequence[int] | None = None,
) -> float:
    """Least-squares slope of spatial variance against time, halved.

    Only frames whose spread stays below ``L/8`` take part, so half a
    period is at least four widths and wrap-around mass is negligible.
    At least three such frames are required.
    """
    if isinstance(trajectory, Trajectory):
        cfg = trajectory.cfg if cfg is None else cfg
        rho = trajectory.rho
    else:
        rho = np.asarray(trajectory, dtype=float)
    if cfg is None:
        raise ValueError("a LatticeConfig is required for a bare array trajectory")
    if rho.ndim != 2 or rho.shape[1] != cfg.n_sites:
        raise ValueError("trajectory must have shape (frames, n_sites)")
    idx = list(range(len(rho))) if frames is None else [int(f) for f in frames]

    limit = (cfg.length / 8.0) ** 2
    times, variances = [], []
    for f in idx:
        _, var = periodic_moments(rho[f], cfg)
        if var < limit:
            times.append(f * cfg.dt)
            variances.append(var)
    if len(times) < 3:
        raise FitError(f"need at least 3 pre-wrap frames, got {len(times)}")
    times = np.asarray(times)
    variances = np.asarray(variances)
    if np.ptp(variances) == 0.0:
        raise FitError("variance does not change; trajectory is degenerate")
    slope = np.polyfit(times, variances, 1)[0]
    return float(slope / 2.0)


def rms_displacement(D: float, t: float) -> float:
    """Root-mean-square 1-D diffusive displacement sqrt(2 D t)."""
    if D < 0 or t < 0:
        raise ValueError("D and t must be non-negative")
    return math.sqrt(2.0 * D * t)
