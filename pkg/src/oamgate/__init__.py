"""Programmable unitary gates from alternating diagonal phase layers.

Gates are synthesized as diagonal phase layers acting alternately in two
Fourier-conjugate encoding domains (OAM charge / azimuthal angle, or path
index / transverse momentum) and verified algebraically, with a scalar-wave
OAM simulation, and with a 1-D path-encoded Fourier optics model.
"""

__version__ = "0.1.0"

from .core import (
    ANGLE,
    SPECTRUM,
    ChannelWindow,
    DiagonalPhase,
    LayerStack,
    central_block,
    compose_stack,
    dft_matrix,
    fidelity,
    phase_test_fidelity,
    success_probability,
)
from .synthesis import (
    GateSpec,
    OptimizationResult,
    OptimizerConfig,
    ShaperFunction,
    SineSeries,
    evaluate_gate,
    optimize,
)

__all__ = [
    "ANGLE",
    "SPECTRUM",
    "ChannelWindow",
    "DiagonalPhase",
    "GateSpec",
    "LayerStack",
    "OptimizationResult",
    "OptimizerConfig",
    "ShaperFunction",
    "SineSeries",
    "central_block",
    "compose_stack",
    "dft_matrix",
    "evaluate_gate",
    "fidelity",
    "optimize",
    "phase_test_fidelity",
    "success_probability",
]
