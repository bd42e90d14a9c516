"""Quantum lattice-gas simulation of 1-D diffusion.

``qlg.lattice`` is the ideal tier, ``qlg.reference`` holds the classical
and continuum references, ``qlg.spin`` simulates the NMR implementation
and ``qlg.cli`` is the command-line harness.
"""
from .lattice import (
    CollisionOperator,
    LatticeConfig,
    OccupationPair,
    Trajectory,
    apply_collision,
    encode_node,
    encode_nodes,
    init_equilibrium,
    measure_occupations,
    run,
    step,
    stream,
)
from .reference import (
    ContinuumParams,
    GaussianProfile,
    UniformProfile,
    classical_average_step,
    classical_run,
    continuum_solution,
    fit_diffusion_coefficient,
    rms_displacement,
)

__version__ = "0.1.0"

__all__ = [
    "CollisionOperator",
    "LatticeConfig",
    "OccupationPair",
    "Trajectory",
    "apply_collision",
    "encode_node",
    "encode_nodes",
    "init_equilibrium",
    "measure_occupations",
    "run",
    "step",
    "stream",
    "ContinuumParams",
    "GaussianProfile",
    "UniformProfile",
    "classical_average_step",
    "classical_run",
    "continuum_solution",
    "fit_diffusion_coefficient",
    "rms_displacement",
    "__version__",
]
