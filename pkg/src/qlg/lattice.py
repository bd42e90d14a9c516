"""Ideal-tier quantum lattice gas for 1-D diffusion.

Each lattice site holds a two-qubit node. Qubit 1 carries the occupation
probability ``f1`` of the upward-moving particle, qubit 2 carries ``f2`` of
the downward-moving one. One time step is

    encode -> collide (sqrt-SWAP) -> measure -> stream

where the first three stages are independent per site and streaming is the
only operation that couples neighbours. Occupations, not quantum states,
cross the step boundary.

Basis ordering is (|00>, |01>, |10>, |11>) with qubit 1 the left tensor
factor, so ``n1 = n (x) 1`` picks out the |10> and |11> amplitudes.

Arrays of occupation pairs are ``(n_sites, 2)`` float arrays with columns
``(f1, f2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "LatticeConfig",
    "OccupationPair",
    "CollisionOperator",
    "Trajectory",
    "SQRT_SWAP",
    "SWAP",
    "NUMBER_1",
    "NUMBER_2",
    "validate_density",
    "init_equilibrium",
    "encode_node",
    "encode_nodes",
    "apply_collision",
    "measure_occupations",
    "stream",
    "step",
    "run",
]

UNITARY_TOL = 1e-12
NORM_TOL = 1e-12

SQRT_SWAP = np.array(
    [
        [1, 0, 0, 0],
        [0, 0.5 + 0.5j, 0.5 - 0.5j, 0],
        [0, 0.5 - 0.5j, 0.5 + 0.5j, 0],
        [0, 0, 0, 1],
    ],
    dtype=complex,
)
SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)

_N = np.diag([0.0, 1.0])
NUMBER_1 = np.kron(_N, np.eye(2))
NUMBER_2 = np.kron(np.eye(2), _N)


@dataclass(frozen=True)
class LatticeConfig:
    """Periodic 1-D lattice geometry. ``length`` is ``n_sites * dz``."""

    n_sites: int
    dz: float = 1.0
    dt: float = 1.0

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 2:
            raise ValueError(f"n_sites must be an integer >= 2, got {self.n_sites!r}")
        if not self.dz > 0 or not self.dt > 0:
            raise ValueError("dz and dt must be positive")
        object.__setattr__(self, "n_sites", int(self.n_sites))

    @property
    def length(self) -> float:
        return self.n_sites * self.dz

    @property
    def diffusion_coefficient(self) -> float:
        """Transport coefficient dz**2 / (2 dt) of the continuum limit."""
        return self.dz**2 / (2.0 * self.dt)

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.n_sites) * self.dz


class OccupationPair(NamedTuple):
    f1: float
    f2: float


@dataclass(frozen=True)
class CollisionOperator:
    """On-site 4x4 unitary. The default instance is the sqrt-SWAP gate."""

    matrix: np.ndarray = field(default_factory=lambda: SQRT_SWAP.copy())

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise ValueError(f"collision operator must be 4x4, got {m.shape}")
        if not np.allclose(m.conj().T @ m, np.eye(4), rtol=0, atol=UNITARY_TOL):
            raise ValueError("collision operator is not unitary")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def sqrt_swap(cls) -> "CollisionOperator":
        return cls(SQRT_SWAP.copy())

    def __matmul__(self, other):
        return self.matrix @ other


_DEFAULT_COLLISION = CollisionOperator()


def validate_density(rho) -> np.ndarray:
    """Return ``rho`` as a float array, rejecting values a node cannot encode."""
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 1 or rho.size == 0:
        raise ValueError("mass density must be a non-empty 1-D array")
    if not np.all(np.isfinite(rho)):
        raise ValueError("mass density contains non-finite values")
    if np.any(rho < 0.0) or np.any(rho > 2.0):
        bad = np.flatnonzero((rho < 0.0) | (rho > 2.0))
        raise ValueError(
            f"mass density must lie in [0, 2] at every site; offending sites {bad.tolist()}"
        )
    return rho


def _check_pairs(pairs) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError(f"occupation pairs must have shape (n, 2), got {pairs.shape}")
    if np.any(pairs < 0.0) or np.any(pairs > 1.0):
        raise ValueError("occupation probabilities must lie in [0, 1]")
    return pairs


def init_equilibrium(rho) -> np.ndarray:
    """Local equilibrium ``f1 = f2 = rho / 2`` at every site."""
    rho = validate_density(rho)
    half = 0.5 * rho
    return np.column_stack([half, half])


def encode_nodes(pairs) -> np.ndarray:
    """Vectorised :func:`encode_node` over an ``(n, 2)`` array; returns ``(n, 4)``."""
    pairs = _check_pairs(pairs)
    f1, f2 = pairs[:, 0], pairs[:, 1]
    g1, g2 = 1.0 - f1, 1.0 - f2
    amps = np.sqrt(np.column_stack([g1 * g2, g1 * f2, f1 * g2, f1 * f2]))
    return amps.astype(complex)


def encode_node(f1: float, f2: float) -> np.ndarray:
    """Product state sqrt(f)|1> + sqrt(1-f)|0> on each qubit, as 4 amplitudes."""
    return encode_nodes([[f1, f2]])[0]


def apply_collision(state, c: CollisionOperator | None = None) -> np.ndarray:
    """Apply ``c`` to one ``(4,)`` state or a batch ``(n, 4)`` of states."""
    c = _DEFAULT_COLLISION if c is None else c
    state = np.asarray(state, dtype=complex)
    return state @ c.matrix.T


def measure_occupations(state, shots: int | None = None, rng=None):
    """Expectation values of ``n1`` and ``n2``.

    A single ``(4,)`` state returns an :class:`OccupationPair`; a batch
    returns an ``(n, 2)`` array. With ``shots`` set, each expectation is
    replaced by a binomial estimate from that many projective samples,
    drawn from ``rng`` (a ``numpy.random.Generator`` or seed).
    """
    state = np.asarray(state, dtype=complex)
    single = state.ndim == 1
    p = np.abs(np.atleast_2d(state)) ** 2
    f = np.column_stack([p[:, 2] + p[:, 3], p[:, 1] + p[:, 3]])
    # rounding can push a probability a few ulps outside [0, 1]
    np.clip(f, 0.0, 1.0, out=f)
    if shots is not None:
        if shots < 1:
            raise ValueError("shots must be positive")
        rng = np.random.default_rng(rng)
        f = rng.binomial(int(shots), f) / float(shots)
    if single:
        return OccupationPair(float(f[0, 0]), float(f[0, 1]))
    return f


def stream(pairs, cfg: LatticeConfig) -> np.ndarray:
    """Shift ``f1`` one site toward +z and ``f2`` one site toward -z (periodic)."""
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim != 2 or pairs.shape != (cfg.n_sites, 2):
        raise ValueError(
            f"expected {cfg.n_sites} occupation pairs, got array of shape {pairs.shape}"
        )
    out = np.empty_like(pairs)
    out[:, 0] = np.roll(pairs[:, 0], 1)
    out[:, 1] = np.roll(pairs[:, 1], -1)
    return out


def step(
    pairs,
    c: CollisionOperator | None = None,
    cfg: LatticeConfig | None = None,
    *,
    shots: int | None = None,
    rng=None,
) -> np.ndarray:
    """One full lattice update on an ``(n, 2)`` occupation array."""
    pairs = _check_pairs(pairs)
    cfg = LatticeConfig(len(pairs)) if cfg is None else cfg
    states = apply_collision(encode_nodes(pairs), c)
    return stream(measure_occupations(states, shots=shots, rng=rng), cfg)


@dataclass(frozen=True)
class Trajectory:
    """Frames ``0..steps`` of a run.

    ``f1[t]``, ``f2[t]`` are the occupations encoded at the start of step
    ``t`` and ``rho[t] = f1[t] + f2[t]``. Indexing returns density frames.
    """

    rho: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    cfg: LatticeConfig

    def __len__(self):
        return len(self.rho)

    def __getitem__(self, t):
        return self.rho[t]

    def __iter__(self):
        return iter(self.rho)

    @property
    def steps(self) -> int:
        return len(self.rho) - 1

    @property
    def mass(self) -> np.ndarray:
        return self.rho.sum(axis=1) * self.cfg.dz

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.rho)) * self.cfg.dt


def run(
    rho0,
    steps: int,
    c: CollisionOperator | None = None,
    cfg: LatticeConfig | None = None,
    *,
    shots: int | None = None,
    seed=None,
) -> Trajectory:
    """Evolve ``rho0`` for ``steps`` lattice updates."""
    rho0 = validate_density(rho0)
    if int(steps) != steps or steps < 0:
        raise ValueError("steps must be a non-negative integer")
    steps = int(steps)
    cfg = LatticeConfig(rho0.size) if cfg is None else cfg
    if cfg.n_sites != rho0.size:
        raise ValueError(f"rho0 has {rho0.size} sites but config expects {cfg.n_sites}")
    rng = np.random.default_rng(seed) if shots is not None else None

    pairs = init_equilibrium(rho0)
    frames = [pairs]
    for _ in range(steps):
        pairs = step(pairs, c, cfg, shots=shots, rng=rng)
        frames.append(pairs)
    stacked = np.stack(frames)
    f1, f2 = stacked[..., 0], stacked[..., 1]
    return Trajectory(rho=f1 + f2, f1=f1, f2=f2, cfg=cfg)
