"""Two-spin operators, Hamiltonians and ensemble states.

Conventions used throughout the spin package:

* qubit 1 is the proton (left tensor factor), qubit 2 the carbon;
* ``sigma_z |0> = +|0>`` and ``|1>`` is the excited state, so the number
  operator is ``n = (1 - sigma_z) / 2``;
* Hamiltonians are in angular-frequency units (rad/s) in the doubly
  rotating frame, offsets and couplings are given in Hz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "I2", "SX", "SY", "SZ",
    "SpinSystem",
    "spin_op",
    "internal_hamiltonian",
    "rf_hamiltonian",
    "gradient_hamiltonian",
    "expm_hermitian",
    "propagate",
    "check_density_matrix",
    "thermal_state",
    "equalized_state",
    "pseudo_pure_state",
    "pseudo_pure_weight",
    "normalized_deviation",
    "bloch_vector",
    "GAMMA_H",
]

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)

_PAULI = {"x": SX, "y": SY, "z": SZ}

# proton gyromagnetic ratio / 2pi in Hz/T
GAMMA_H = 42.577478e6

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
POSITIVITY_TOL = 1e-10


def spin_op(axis: str, spin: int) -> np.ndarray:
    """Pauli ``axis`` acting on ``spin`` (1 or 2) of the two-spin node."""
    p = _PAULI[axis]
    if spin == 1:
        return np.kron(p, I2)
    if spin == 2:
        return np.kron(I2, p)
    raise ValueError(f"spin must be 1 or 2, got {spin!r}")


SZ1, SZ2 = spin_op("z", 1), spin_op("z", 2)
ZZ = SZ1 @ SZ2


@dataclass(frozen=True)
class SpinSystem:
    """Heteronuclear two-spin node (13C-labelled chloroform by default).

    ``J`` defaults to 215 Hz, the textbook one-bond C-H coupling of
    chloroform; it is a configuration value, not a measured one.
    """

    J: float = 215.0
    gamma_ratio: float = 3.976
    offset_h: float = 0.0
    offset_c: float = 0.0
    epsilon: float = 1e-5
    gamma_h: float = GAMMA_H

    def __post_init__(self):
        if not self.J >= 0:
            raise ValueError("J must be non-negative")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.gamma_ratio > 0:
            raise ValueError("gamma_ratio must be positive")

    @property
    def gamma_c(self) -> float:
        return self.gamma_h / self.gamma_ratio


def internal_hamiltonian(sys: SpinSystem) -> np.ndarray:
    """-w_H/2 Z1 - w_C/2 Z2 + (pi J / 2) Z1 Z2 with w = 2 pi offset."""
    w_h = 2 * math.pi * sys.offset_h
    w_c = 2 * math.pi * sys.offset_c
    return -0.5 * w_h * SZ1 - 0.5 * w_c * SZ2 + 0.5 * math.pi * sys.J * ZZ


def rf_hamiltonian(spin: int, wx: float, wy: float) -> np.ndarray:
    """-(wx X + wy Y) / 2 on one spin; amplitudes in rad/s."""
    return -0.5 * (wx * spin_op("x", spin) + wy * spin_op("y", spin))


def gradient_hamiltonian(sys: SpinSystem, gradient: float, z: float) -> np.ndarray:
    """Position-dependent Zeeman term for a field gradient in T/m at ``z`` (m)."""
    w_h = 2 * math.pi * sys.gamma_h * gradient * z
    w_c = 2 * math.pi * sys.gamma_c * gradient * z
    return -0.5 * w_h * SZ1 - 0.5 * w_c * SZ2


def expm_hermitian(H, t) -> np.ndarray:
    """exp(-i H t) for Hermitian ``H`` (batched over leading axes)."""
    H = np.asarray(H, dtype=complex)
    evals, evecs = np.linalg.eigh(H)
    phases = np.exp(-1j * evals * np.asarray(t, dtype=float)[..., None])
    return (evecs * phases[..., None, :]) @ np.swapaxes(evecs.conj(), -1, -2)


def _require_hermitian(H):
    H = np.asarray(H, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    if not np.allclose(H, np.swapaxes(H.conj(), -1, -2), rtol=0, atol=HERMITIAN_TOL * scale):
        raise ValueError("Hamiltonian is not Hermitian")
    return H


def propagate(rho, H, t: float) -> np.ndarray:
    """U rho U^dagger with U = exp(-i H t)."""
    H = _require_hermitian(H)
    U = expm_hermitian(H, t)
    rho = np.asarray(rho, dtype=complex)
    return U @ rho @ np.swapaxes(U.conj(), -1, -2)


def check_density_matrix(rho, *, trace: float | None = 1.0) -> np.ndarray:
    """Validate Hermiticity, trace and positivity; return ``rho`` as complex."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != (4, 4):
        raise ValueError(f"expected 4x4 density matrices, got shape {rho.shape}")
    if not np.allclose(rho, np.swapaxes(rho.conj(), -1, -2), rtol=0, atol=HERMITIAN_TOL):
        raise ValueError("density matrix is not Hermitian")
    if trace is not None:
        tr = np.trace(rho, axis1=-2, axis2=-1)
        if not np.allclose(tr, trace, rtol=0, atol=TRACE_TOL):
            raise ValueError(f"density matrix trace {tr} != {trace}")
    if np.min(np.linalg.eigvalsh(rho)) < -POSITIVITY_TOL:
        raise ValueError("density matrix has negative eigenvalues")
    return rho


def thermal_state(sys: SpinSystem) -> np.ndarray:
    """High-temperature equilibrium: 1/4 + eps (g Z1 + Z2), g = gamma_H/gamma_C."""
    return np.eye(4) / 4 + sys.epsilon * (sys.gamma_ratio * SZ1 + SZ2)


def equalized_state(sys: SpinSystem) -> np.ndarray:
    """Thermal state with both magnetizations set to their mean."""
    return np.eye(4) / 4 + 0.5 * sys.epsilon * (1 + sys.gamma_ratio) * (SZ1 + SZ2)


def pseudo_pure_weight(sys: SpinSystem) -> float:
    """Weight eps' of |00><00| in the pseudo-pure state."""
    return sys.epsilon * math.sqrt(3) / (4 * math.sqrt(2)) * (1 + sys.gamma_ratio)


def pseudo_pure_state(sys: SpinSystem) -> np.ndarray:
    """((1 - eps') / 4) 1 + eps' |00><00|, normalised to unit trace."""
    w = pseudo_pure_weight(sys)
    rho = 0.25 * (1 - w) * np.eye(4, dtype=complex)
    rho[0, 0] += w
    return rho


def normalized_deviation(rho, sys: SpinSystem) -> np.ndarray:
    """Strip the inert identity part of a pseudo-pure ensemble state.

    Returns ``(rho - (1 - eps')/4 * 1) / eps'``: the unit-trace operator
    that evolves like the underlying pure-state density matrix.
    """
    w = pseudo_pure_weight(sys)
    return (np.asarray(rho, dtype=complex) - 0.25 * (1 - w) * np.eye(4)) / w


def bloch_vector(rho, spin: int) -> np.ndarray:
    """(<X>, <Y>, <Z>) of one spin for a batch of two-spin density matrices."""
    rho = np.asarray(rho, dtype=complex)
    return np.stack(
        [np.real(np.einsum("ij,...ji->...", spin_op(a, spin), rho)) for a in "xyz"],
        axis=-1,
    )
