"""Spin-dynamics tier: the two-spin NMR node and the pulse-level experiment."""
from .experiment import ExperimentConfig, ExperimentConfigError, ExperimentResult, simulate_experiment
from .operators import (
    SpinSystem,
    equalized_state,
    pseudo_pure_state,
    thermal_state,
)
from .pulses import (
    PulseSequence,
    compile_collision,
    compile_swap,
    gate_fidelity,
    sequence_unitary,
)
from .slices import (
    ShapedPulse,
    SliceLattice,
    decoupled_encode,
    design_shaped_pulse,
    gradient_readout,
    shaped_encode,
    stream_by_frequency_shift,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentConfigError",
    "ExperimentResult",
    "simulate_experiment",
    "SpinSystem",
    "equalized_state",
    "pseudo_pure_state",
    "thermal_state",
    "PulseSequence",
    "compile_collision",
    "compile_swap",
    "gate_fidelity",
    "sequence_unitary",
    "ShapedPulse",
    "SliceLattice",
    "decoupled_encode",
    "design_shaped_pulse",
    "gradient_readout",
    "shaped_encode",
    "stream_by_frequency_shift",
]
