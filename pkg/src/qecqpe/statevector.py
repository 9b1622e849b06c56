"""Dense statevector with in-place gate application and Born-rule collapse.

Conventions (fixed here, relied on everywhere):
  * qubit q is bit q of the flat amplitude index (little-endian);
  * R_Z(a) = e^{-i a Z/2}, R_X/R_Y likewise; R_ZZ(a) = e^{-i a ZZ/2},
    R_XX(a) = e^{-i a XX/2};
  * two-qubit matrices are indexed by r = 2*bit(first qubit) + bit(second),
    so CX = (control, target).

Measurement always consumes exactly one uniform draw per collapse (also for
resets), so the dense state and the factored trajectory state walk identical
RNG streams and produce bit-identical shots.
"""

from __future__ import annotations

import cmath
import math
from functools import lru_cache

import numpy as np

from . import kernels
from .circuit import ANGLE_GATES, GATE_ARITY, CircuitError

__all__ = ["SimulationError", "StateVector", "gate_matrix", "apply_gate"]

_SQ2 = 1.0 / math.sqrt(2.0)

_FIXED_1Q = {
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
    "H": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=np.complex128),
    "S": np.array([[1, 0], [0, 1j]], dtype=np.complex128),
    "Sdg": np.array([[1, 0], [0, -1j]], dtype=np.complex128),
    "T": np.array([[1, 0], [0, cmath.exp(0.25j * math.pi)]], dtype=np.complex128),
    "Tdg": np.array([[1, 0], [0, cmath.exp(-0.25j * math.pi)]], dtype=np.complex128),
}

# Diagonal 1q gates get a cheap kernel path.
_DIAG_1Q = {"Z", "S", "Sdg", "T", "Tdg", "RZ"}


class SimulationError(RuntimeError):
    """Numerical corruption or misuse detected during simulation."""


@lru_cache(maxsize=4096)
def gate_matrix(name: str, angle: float | None = None) -> np.ndarray:
    """Unitary matrix for a named gate (2x2 or 4x4, read-only)."""
    if name in _FIXED_1Q:
        m = _FIXED_1Q[name]
    elif name == "CX":
        m = np.array(
            [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]],
            dtype=np.complex128,
        )
    elif name == "RX":
        c, s = math.cos(angle / 2), math.sin(angle / 2)
        m = np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)
    elif name == "RY":
        c, s = math.cos(angle / 2), math.sin(angle / 2)
        m = np.array([[c, -s], [s, c]], dtype=np.complex128)
    elif name == "RZ":
        e = cmath.exp(-0.5j * angle)
        m = np.array([[e, 0], [0, e.conjugate()]], dtype=np.complex128)
    elif name == "RZZ":
        e = cmath.exp(-0.5j * angle)
        m = np.diag([e, e.conjugate(), e.conjugate(), e]).astype(np.complex128)
    elif name == "RXX":
        c, s = math.cos(angle / 2), -1j * math.sin(angle / 2)
        m = np.array(
            [[c, 0, 0, s], [0, c, s, 0], [0, s, c, 0], [s, 0, 0, c]],
            dtype=np.complex128,
        )
    else:
        raise CircuitError(f"unknown gate {name!r}")
    m.setflags(write=False)
    return m


@lru_cache(maxsize=2048)
def _diag_entries(name: str, angle: float | None) -> tuple[complex, complex]:
    m = gate_matrix(name, angle)
    return complex(m[0, 0]), complex(m[1, 1])


@lru_cache(maxsize=2048)
def _rzz_diag(angle: float) -> np.ndarray:
    e = cmath.exp(-0.5j * angle)
    d = np.array([e, e.conjugate(), e.conjugate(), e], dtype=np.complex128)
    d.setflags(write=False)
    return d


def apply_gate(amps: np.ndarray, positions: tuple[int, ...], name: str,
               angle: float | None = None) -> None:
    """Apply a named gate in place; ``positions`` are bit positions in ``amps``."""
    if name == "CX":
        kernels.apply_cx(amps, positions[0], positions[1])
    elif name == "X":
        kernels.apply_x(amps, positions[0])
    elif name in _DIAG_1Q:
        d0, d1 = _diag_entries(name, angle)
        kernels.apply_diag_1q(amps, positions[0], d0, d1)
    elif name == "RZZ":
        kernels.apply_diag_2q(amps, positions[0], positions[1], _rzz_diag(angle))
    elif GATE_ARITY[name] == 1:
        kernels.apply_1q(amps, positions[0], gate_matrix(name, angle))
    else:
        kernels.apply_2q(amps, positions[0], positions[1], gate_matrix(name, angle))


_PAULI_APPLIERS = {
    "X": lambda amps, p: kernels.apply_x(amps, p),
    "Y": lambda amps, p: kernels.apply_1q(amps, p, _FIXED_1Q["Y"]),
    "Z": lambda amps, p: kernels.apply_diag_1q(amps, p, 1.0 + 0j, -1.0 + 0j),
}


class StateVector:
    """2^n complex amplitudes over n qubits, |0...0> initialized."""

    def __init__(self, num_qubits: int, max_qubits: int = 24):
        if not 0 <= num_qubits <= max_qubits:
            raise SimulationError(
                f"num_qubits={num_qubits} outside [0, {max_qubits}]"
            )
        self.num_qubits = num_qubits
        self.amplitudes = np.zeros(1 << num_qubits, dtype=np.complex128)
        self.amplitudes[0] = 1.0

    # -- backend protocol (shared with the factored trajectory state) --------

    def _check(self, qubits: tuple[int, ...]) -> None:
        if len(set(qubits)) != len(qubits):
            raise CircuitError(f"duplicate qubit indices {qubits}")
        for q in qubits:
            if not 0 <= q < self.num_qubits:
                raise CircuitError(f"qubit {q} out of range [0, {self.num_qubits})")

    def apply_unitary(self, name: str, qubits: tuple[int, ...],
                      angle: float | None = None) -> None:
        arity = GATE_ARITY.get(name)
        if arity is None:
            raise CircuitError(f"unknown gate {name!r}")
        if len(qubits) != arity:
            raise CircuitError(f"{name} takes {arity} qubit(s), got {qubits}")
        if name in ANGLE_GATES and angle is None:
            raise CircuitError(f"{name} needs an angle")
        self._check(tuple(qubits))
        apply_gate(self.amplitudes, tuple(qubits), name, angle)

    def apply_pauli(self, qubit: int, pauli: str) -> None:
        self._check((qubit,))
        _PAULI_APPLIERS[pauli](self.amplitudes, qubit)

    def prob_one(self, qubit: int) -> float:
        self._check((qubit,))
        return kernels.prob_one(self.amplitudes, qubit)

    def measure(self, qubit: int, rng: np.random.Generator) -> int:
        """Born-rule collapse; exactly one uniform draw per call."""
        p1 = self.prob_one(qubit)
        bit = 1 if rng.random() < p1 else 0
        p_keep = p1 if bit else 1.0 - p1
        if p_keep <= 0.0:
            raise SimulationError(
                f"measured zero-probability branch {bit} on qubit {qubit}"
            )
        kernels.project(self.amplitudes, qubit, bit, 1.0 / math.sqrt(p_keep))
        return bit

    def reset(self, qubit: int, rng: np.random.Generator) -> None:
        if self.measure(qubit, rng):
            kernels.apply_x(self.amplitudes, qubit)

    def apply_phase(self, qubit: int, z: complex) -> None:
        """diag(1, z) on one qubit (settles a deferred idle phase)."""
        kernels.apply_diag_1q(self.amplitudes, qubit, 1.0 + 0j, z)

    def apply_x_layer(self, qubits) -> None:
        mask = 0
        for q in qubits:
            mask |= 1 << q
        kernels.apply_x_mask(self.amplitudes, mask)

    def measure_after_cx(self, qc: int, qt: int, z_t: complex,
                         rng: np.random.Generator) -> int:
        """CX(qc -> qt) then readout of qt; z_t = deferred diag(1, z) on qt.

        Dense reference path: applies the steps literally.  One uniform draw,
        matching the factored engine's fused kernel.
        """
        self.apply_phase(qt, z_t)
        apply_gate(self.amplitudes, (qc, qt), "CX", None)
        return self.measure(qt, rng)

    def measure_x_after_cx(self, qc: int, qt: int, z_c: complex, z_t: complex,
                           rng: np.random.Generator) -> int:
        """CX(qc -> qt), H(qc), then readout of qc, with deferred phases."""
        self.apply_phase(qt, z_t)
        self.apply_phase(qc, z_c)
        apply_gate(self.amplitudes, (qc, qt), "CX", None)
        apply_gate(self.amplitudes, (qc,), "H", None)
        return self.measure(qc, rng)

    # -- analysis helpers ----------------------------------------------------

    def norm_sq(self) -> float:
        return kernels.norm_sq(self.amplitudes)

    def copy(self) -> "StateVector":
        out = StateVector.__new__(StateVector)
        out.num_qubits = self.num_qubits
        out.amplitudes = self.amplitudes.copy()
        return out

    def overlap(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def expectation_pauli(self, pauli: str) -> float:
        """<psi|P|psi> for a length-n string over IXYZ (index i = qubit i)."""
        if len(pauli) != self.num_qubits:
            raise CircuitError(
                f"Pauli string length {len(pauli)} != {self.num_qubits} qubits"
            )
        work = self.amplitudes.copy()
        for q, ch in enumerate(pauli):
            if ch == "I":
                continue
            if ch not in _PAULI_APPLIERS:
                raise CircuitError(f"bad Pauli character {ch!r} in {pauli!r}")
            _PAULI_APPLIERS[ch](work, q)
        val = np.vdot(self.amplitudes, work)
        if abs(val.imag) > 1e-10:
            raise SimulationError(f"non-real Pauli expectation {val}")
        return float(val.real)
