"""Noisy statevector simulation and phase-estimation analysis for a
two-level molecular Hamiltonian encoded in the [[7,1,3]] color code."""

from .circuit import (
    Circuit,
    CircuitBuilder,
    CircuitError,
    Conditional,
    Discard,
    IdleBarrier,
    Measure,
    ParityTest,
    ParseError,
    Predicate,
    RepeatUntil,
    Reset,
    ResourceCount,
    Unitary,
    count_resources,
    deserialize,
    serialize,
)
from .kernels import BACKEND_NAME, HAVE_COMPILED
from .statevector import SimulationError, StateVector, gate_matrix

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "Circuit",
    "CircuitBuilder",
    "CircuitError",
    "Conditional",
    "Discard",
    "HAVE_COMPILED",
    "IdleBarrier",
    "Measure",
    "ParityTest",
    "ParseError",
    "Predicate",
    "RepeatUntil",
    "Reset",
    "ResourceCount",
    "SimulationError",
    "StateVector",
    "Unitary",
    "__version__",
    "count_resources",
    "deserialize",
    "gate_matrix",
    "serialize",
]
