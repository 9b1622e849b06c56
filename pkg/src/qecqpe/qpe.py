"""Phase-estimation circuit builders for the two-level hydrogen problem.

The working Hamiltonian is H = h1 Z + h2 X + h3 I on a single (logical)
qubit, evolved for t = pi/(8 h1) so that the Z exponential is exactly an
eighth turn.  One estimation shot prepares a trial state, applies k
controlled Trotter steps to it with the control in |+>, shifts the control
phase by beta - h3 k t, and reads the control in the X basis.  The outcome
statistics follow

    P(m) = sum_j |a_j|^2 (1 + cos(k phi_j + beta - m pi)) / 2

over the trial state's weight |a_j|^2 on each eigenvector, with phi_j the
full eigenphase -E_j t.  Everything downstream (calibration, maximum
likelihood, energy conversion) consumes this one formula.

Encoded variants replace the two physical qubits with Steane blocks.  Three
builds are available: "pft" (verified preparation, checked direct rotations,
teleported rotations from checked resources, correction rounds on both
blocks), "exp" (bare preparation, unchecked rotations, one X-syndrome round
on the control block per step), and "noqec" (exp minus the correction
rounds).  The teleported rotations force angles onto the pi/32 grid; the
X-part angle h2 t then lands on -pi/32 and the induced offset in the step's
eigenphase is part of what the encoded circuit genuinely implements, so the
calibration helpers work from the per-setup effective step, not the ideal
one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .circuit import (
    Circuit,
    CircuitBuilder,
    Conditional,
    Discard,
    Instruction,
    Measure,
    ParityTest,
    Predicate,
    Reset,
    Unitary,
)
from .engine import TrajectoryResult, insert_dd
from .steane import (
    BinaryFractionAngle,
    SteaneBlock,
    decode_readout,
    encode_plus_ops,
    encode_zero_ops,
    logical_cx_ops,
    measure_block_ops,
    qec_ops,
    qed_ops,
    rz_direct_ops,
    rz_teleport_ops,
    transversal_ops,
)

__all__ = [
    "SETUPS",
    "HamiltonianParams",
    "AnsatzParams",
    "QpeJob",
    "working_hamiltonian",
    "step_unitary",
    "trotter_unitary",
    "eigen_components",
    "outcome_probability",
    "ground_eigenphase",
    "calibration_beta",
    "build_unencoded_qpe",
    "build_encoded_qpe",
    "build_calibration_circuit",
    "sample_parameters",
    "final_readout_clbits",
    "shot_outcome",
    "SYSTEM",
    "ANCILLA",
    "AUXILIARY",
    "VERIFY_QUBIT",
    "QED_ANCILLAS",
]

SETUPS = ("unencoded", "pft", "exp", "noqec")

# Fixed register layout for every encoded build.  The auxiliary block serves
# both as the teleportation resource and as the syndrome block of correction
# rounds; gadgets reset it before each use.  Qubit 21 doubles as preparation
# flag and first cell-check ancilla (also reset-reused), so only "pft" — the
# one setup running cell checks — needs qubit 22.
SYSTEM = SteaneBlock(tuple(range(0, 7)))
ANCILLA = SteaneBlock(tuple(range(7, 14)))
AUXILIARY = SteaneBlock(tuple(range(14, 21)))
VERIFY_QUBIT = 21
QED_ANCILLAS = (21, 22)

_Z = np.diag([1.0, -1.0]).astype(complex)
_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


@dataclass(frozen=True)
class HamiltonianParams:
    """Coefficients of H = h1 Z + h2 X + h3 I (hartree) and the evolution time."""

    h1: float
    h2: float
    h3: float
    t: float
    e_fci: float

    @classmethod
    def default(cls) -> "HamiltonianParams":
        h1 = 0.79605
        return cls(
            h1=h1,
            h2=-0.18092,
            h3=-0.32096,
            t=math.pi / (8.0 * h1),
            e_fci=-1.13731,
        )

    def matrix(self) -> np.ndarray:
        return self.h1 * _Z + self.h2 * _X + self.h3 * np.eye(2)

    def energies(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix())


@dataclass(frozen=True)
class AnsatzParams:
    """Trial-state angles: |Phi> = R_Z(alpha1) R_Y(alpha0) |1>."""

    alpha0: float
    alpha1: float

    @classmethod
    def calibration(cls) -> "AnsatzParams":
        # near-eigenstate of the Trotter step (weight > 0.997 on the ground
        # eigenvector); used when the expected outcome should be all-zero
        return cls(-0.274220, -0.785398)

    @classmethod
    def hartree_fock(cls) -> "AnsatzParams":
        return cls(0.0, 0.0)

    @classmethod
    def eigenstate(
        cls, params: Optional["HamiltonianParams"] = None, *, snapped: bool = False
    ) -> "AnsatzParams":
        """Angles preparing the exact ground eigenvector of the step.

        Makes every noiseless calibration outcome 0, so decay fits measure
        circuit decoherence alone.  A desk-simulator luxury: hardware cannot
        know this state, which is why ``calibration()`` is only near it.
        """
        params = params or HamiltonianParams.default()
        w, v = np.linalg.eig(step_unitary(params, snapped=snapped))
        energies = [params.h3 - float(np.angle(wi)) / params.t for wi in w]
        vec = v[:, int(np.argmin(energies))]
        a, b = complex(vec[0]), complex(vec[1])
        return cls(
            2.0 * math.atan2(abs(a), abs(b)),
            float(np.angle(b) - np.angle(a) + math.pi),
        )

    def state(self) -> np.ndarray:
        a0, a1 = self.alpha0, self.alpha1
        v = np.array([-math.sin(a0 / 2.0), math.cos(a0 / 2.0)], dtype=complex)
        v[0] *= np.exp(-0.5j * a1)
        v[1] *= np.exp(0.5j * a1)
        return v


@dataclass(frozen=True)
class QpeJob:
    """A sampled batch of (k, beta) settings, each run shots_per_pair times."""

    setup: str
    k_max: int
    pairs: int
    shots_per_pair: int
    ks: tuple[int, ...]
    betas: tuple[float, ...]

    @property
    def total_shots(self) -> int:
        return self.pairs * self.shots_per_pair


def working_hamiltonian(
    params: Optional[HamiltonianParams] = None,
) -> tuple[np.ndarray, HamiltonianParams]:
    params = params or HamiltonianParams.default()
    return params.matrix(), params


def _exp_pauli(axis: np.ndarray, theta: float) -> np.ndarray:
    # e^{-i theta axis}
    return math.cos(theta) * np.eye(2) - 1j * math.sin(theta) * axis


def step_unitary(
    params: Optional[HamiltonianParams] = None, *, snapped: bool = False
) -> np.ndarray:
    """One Trotter step as the circuits implement it: Z part first, X part
    second, so the X exponential is the left matrix factor.

    ``snapped=True`` moves the X angle onto the pi/32 grid used by the
    teleported rotations; the Z angle pi/8 is already a grid point.
    """
    params = params or HamiltonianParams.default()
    th1 = params.h1 * params.t
    th2 = params.h2 * params.t
    if snapped:
        th1 = BinaryFractionAngle.from_angle(th1).theta
        th2 = BinaryFractionAngle.from_angle(th2).theta
    return _exp_pauli(_X, th2) @ _exp_pauli(_Z, th1)


def trotter_unitary(
    k: int, params: Optional[HamiltonianParams] = None, *, snapped: bool = False
) -> np.ndarray:
    if k < 0:
        raise ValueError(f"k={k} must be >= 0")
    return np.linalg.matrix_power(step_unitary(params, snapped=snapped), k)


def eigen_components(
    ansatz: AnsatzParams,
    params: Optional[HamiltonianParams] = None,
    *,
    snapped: bool = False,
) -> tuple[tuple[float, float], ...]:
    """(weight, full eigenphase) pairs of the trial state on the step's
    eigenvectors, ground first.  The full phase is -E t, i.e. the step's bare
    eigenphase plus the h3 t the phase-shift gate reinstates."""
    params = params or HamiltonianParams.default()
    w, v = np.linalg.eig(step_unitary(params, snapped=snapped))
    trial = ansatz.state()
    comps = []
    for j in range(2):
        bare = float(np.angle(w[j]))           # principal branch
        energy = params.h3 - bare / params.t
        phi = (bare - params.h3 * params.t) % (2.0 * math.pi)
        comps.append((energy, abs(np.vdot(v[:, j], trial)) ** 2, phi))
    comps.sort()
    return tuple((weight, phi) for _, weight, phi in comps)


def ground_eigenphase(
    params: Optional[HamiltonianParams] = None, *, snapped: bool = False
) -> float:
    """Full ground-state eigenphase -E0 t in [0, 2pi)."""
    params = params or HamiltonianParams.default()
    w = np.linalg.eigvals(step_unitary(params, snapped=snapped))
    energies = [params.h3 - float(np.angle(wi)) / params.t for wi in w]
    return (-min(energies) * params.t) % (2.0 * math.pi)


def outcome_probability(
    k: int,
    beta: float,
    ansatz: AnsatzParams,
    params: Optional[HamiltonianParams] = None,
    *,
    m: int = 0,
    snapped: bool = False,
) -> float:
    """Noiseless P(m) for one shot at (k, beta)."""
    total = 0.0
    for weight, phi in eigen_components(ansatz, params, snapped=snapped):
        total += weight * (1.0 + math.cos(k * phi + beta - m * math.pi)) / 2.0
    return total


def calibration_beta(
    k: int, params: Optional[HamiltonianParams] = None, *, snapped: bool = False
) -> float:
    return (-k * ground_eigenphase(params, snapped=snapped)) % (2.0 * math.pi)


# ---------------------------------------------------------------------------
# Unencoded build

def build_unencoded_qpe(
    k: int,
    beta: float,
    ansatz: AnsatzParams,
    params: Optional[HamiltonianParams] = None,
) -> Circuit:
    """Two physical qubits: system on 0, control on 1, one readout bit."""
    if k < 0:
        raise ValueError(f"k={k} must be >= 0")
    params = params or HamiltonianParams.default()
    th1 = params.h1 * params.t
    th2 = params.h2 * params.t
    b = CircuitBuilder(2)
    m_bit = b.new_clbit()
    ops: list[Instruction] = [Reset(0), Reset(1)]
    ops += [
        Unitary("X", (0,)),
        Unitary("RY", (0,), ansatz.alpha0),
        Unitary("RZ", (0,), ansatz.alpha1),
        Unitary("H", (1,)),
    ]
    for _ in range(k):
        # ctrl-e^{-i th Z}: the inner RZ pair cancels on control 0 and
        # composes to RZ(2 th) on control 1
        ops += [
            Unitary("RZ", (0,), th1),
            Unitary("CX", (1, 0)),
            Unitary("RZ", (0,), -th1),
            Unitary("CX", (1, 0)),
        ]
        ops += [
            Unitary("H", (0,)),
            Unitary("RZ", (0,), th2),
            Unitary("CX", (1, 0)),
            Unitary("RZ", (0,), -th2),
            Unitary("CX", (1, 0)),
            Unitary("H", (0,)),
        ]
    ops += [
        Unitary("RZ", (1,), beta - params.h3 * k * params.t),
        Unitary("H", (1,)),
        Measure(1, m_bit),
    ]
    b.metadata.update(setup="unencoded", k=k, beta=beta, readout=(m_bit,))
    return b.add(*ops).build()


# ---------------------------------------------------------------------------
# Encoded builds

def _checked_rz_direct(
    b: CircuitBuilder, block: SteaneBlock, theta: float
) -> list[Instruction]:
    """Direct rotation plus the two flagged cell checks; any raised flag
    discards the shot (the rotation already consumed the data, so unlike the
    resource preparation there is nothing to retry)."""
    ops = rz_direct_ops(block, theta)
    flags: list[int] = []
    for cell_index in (0, 1):
        sub, bits = qed_ops(b, block, cell_index, QED_ANCILLAS)
        ops += sub
        flags += list(bits)
    fired = Predicate.any_clause([(ParityTest((c,), 1),) for c in flags])
    ops.append(Conditional(fired, (Discard(),)))
    return ops


def _teleported_rz(
    b: CircuitBuilder, angle: BinaryFractionAngle, checked: bool
) -> list[Instruction]:
    if checked:
        return rz_teleport_ops(
            b, SYSTEM, AUXILIARY, angle,
            mode="qed", verify=VERIFY_QUBIT, qed_ancillas=QED_ANCILLAS,
        )
    return rz_teleport_ops(b, SYSTEM, AUXILIARY, angle, mode="noqed")


def _correction(b: CircuitBuilder, block: SteaneBlock, kind: str) -> list[Instruction]:
    return qec_ops(b, block, AUXILIARY, verify=VERIFY_QUBIT, kind=kind)


def _ctrl_u_ops(
    b: CircuitBuilder, setup: str, params: HamiltonianParams
) -> list[Instruction]:
    checked = setup == "pft"
    m1 = BinaryFractionAngle.from_angle(params.h1 * params.t)
    m2 = BinaryFractionAngle.from_angle(params.h2 * params.t)
    ops: list[Instruction] = []
    ops += _teleported_rz(b, m1, checked)
    ops += logical_cx_ops(ANCILLA, SYSTEM)
    ops += _teleported_rz(b, -m1, checked)
    ops += logical_cx_ops(ANCILLA, SYSTEM)
    if setup == "pft":
        # mid-step X-syndrome round on both blocks, control block first
        ops += _correction(b, ANCILLA, "x")
        ops += _correction(b, SYSTEM, "x")
    ops += transversal_ops(SYSTEM, "H")
    ops += _teleported_rz(b, m2, checked)
    ops += logical_cx_ops(ANCILLA, SYSTEM)
    ops += _teleported_rz(b, -m2, checked)
    ops += logical_cx_ops(ANCILLA, SYSTEM)
    ops += transversal_ops(SYSTEM, "H")
    if setup == "pft":
        ops += _correction(b, ANCILLA, "xz")
        ops += _correction(b, SYSTEM, "xz")
    elif setup == "exp":
        ops += _correction(b, ANCILLA, "x")
    return ops


def build_encoded_qpe(
    setup: str,
    k: int,
    beta: float,
    ansatz: AnsatzParams,
    params: Optional[HamiltonianParams] = None,
    *,
    dd: bool = True,
    dd_durations: Optional[dict] = None,
) -> Circuit:
    """Steane-block version of the estimation shot.

    ``dd=True`` (the default) inserts echo pairs into every idle window
    longer than one readout; ``dd=False`` leaves the schedule bare.
    """
    setup = setup.lower()
    if setup not in ("pft", "exp", "noqec"):
        raise ValueError(f"unknown setup {setup!r}")
    if k < 0:
        raise ValueError(f"k={k} must be >= 0")
    params = params or HamiltonianParams.default()
    ft = setup == "pft"
    b = CircuitBuilder(23 if ft else 22)
    ops: list[Instruction] = []

    # trial state on the system block: X, H, RZ(a0), H, S, RZ(a1) compiles
    # R_Z(a1) R_Y(a0) |1> exactly
    ops += encode_zero_ops(b, SYSTEM, ft=ft, verify=VERIFY_QUBIT if ft else None)
    ops += transversal_ops(SYSTEM, "X")
    ops += transversal_ops(SYSTEM, "H")
    ops += rz_direct_ops(SYSTEM, ansatz.alpha0)
    ops += transversal_ops(SYSTEM, "H")
    ops += transversal_ops(SYSTEM, "S")
    if ft:
        ops += _checked_rz_direct(b, SYSTEM, ansatz.alpha1)
    else:
        ops += rz_direct_ops(SYSTEM, ansatz.alpha1)

    # control block |+_L>, prepared last so it idles least before use
    ops += encode_plus_ops(b, ANCILLA, ft=ft, verify=VERIFY_QUBIT if ft else None)

    for _ in range(k):
        ops += _ctrl_u_ops(b, setup, params)

    shift = beta - params.h3 * k * params.t
    if ft:
        ops += _checked_rz_direct(b, ANCILLA, shift)
    else:
        ops += rz_direct_ops(ANCILLA, shift)

    readout = b.new_clbits(7)
    ops += measure_block_ops(ANCILLA, readout, basis="x")
    b.metadata.update(setup=setup, k=k, beta=beta, readout=tuple(readout))
    circuit = b.add(*ops).build()
    if dd:
        circuit = insert_dd(circuit, durations=dd_durations)
    return circuit


def build_calibration_circuit(
    setup: str,
    k: int,
    params: Optional[HamiltonianParams] = None,
    *,
    ansatz: Optional[AnsatzParams] = None,
    dd: bool = True,
    dd_durations: Optional[dict] = None,
) -> Circuit:
    """Near-eigenstate run with beta chosen so every noiseless outcome is 0.

    beta compensates the eigenphase of the step each setup actually applies —
    grid-snapped for the encoded builds, exact for the unencoded one.  The
    default trial state is the physical ansatz; pass
    ``AnsatzParams.eigenstate(...)`` to zero out the residual leakage.
    """
    setup = setup.lower()
    params = params or HamiltonianParams.default()
    ansatz = ansatz or AnsatzParams.calibration()
    beta = calibration_beta(k, params, snapped=setup != "unencoded")
    if setup == "unencoded":
        return build_unencoded_qpe(k, beta, ansatz, params)
    return build_encoded_qpe(
        setup, k, beta, ansatz, params, dd=dd, dd_durations=dd_durations
    )


def sample_parameters(
    setup: str,
    k_max: int,
    pairs: int,
    shots_per_pair: int,
    rng: np.random.Generator | int,
) -> QpeJob:
    """Uniform draws k ~ {1..k_max}, beta ~ [0, 2pi)."""
    if setup.lower() not in SETUPS:
        raise ValueError(f"unknown setup {setup!r}")
    if k_max < 1 or pairs < 1 or shots_per_pair < 1:
        raise ValueError("k_max, pairs and shots_per_pair must all be >= 1")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    ks = tuple(int(v) for v in rng.integers(1, k_max + 1, size=pairs))
    betas = tuple(float(v) for v in rng.uniform(0.0, 2.0 * math.pi, size=pairs))
    return QpeJob(
        setup=setup.lower(),
        k_max=k_max,
        pairs=pairs,
        shots_per_pair=shots_per_pair,
        ks=ks,
        betas=betas,
    )


# ---------------------------------------------------------------------------
# Reading results back

def final_readout_clbits(circuit: Circuit) -> tuple[int, ...]:
    """Classical bits of the final readout, in qubit order.

    Circuits from the builders carry the bit list in metadata (decoupling
    pulses may interleave with the serialized measurement layer); for foreign
    circuits fall back to the trailing run of Measure instructions.
    """
    meta = circuit.metadata.get("readout")
    if meta is not None:
        return tuple(int(c) for c in meta)
    tail: list[Measure] = []
    for ins in reversed(circuit.instructions):
        if not isinstance(ins, Measure):
            break
        tail.append(ins)
    tail.reverse()
    return tuple(ins.clbit for ins in tail)


def shot_outcome(circuit: Circuit, result: TrajectoryResult) -> Optional[int]:
    """Logical outcome m of one trajectory; None for a discarded shot.

    A single trailing measurement is the outcome itself; a seven-bit block
    readout goes through the code decoder.
    """
    if result.discarded:
        return None
    bits = [int(result.clbits[c]) for c in final_readout_clbits(circuit)]
    if len(bits) == 1:
        return bits[0]
    if len(bits) == 7:
        return decode_readout(bits).logical
    raise ValueError(f"unexpected readout width {len(bits)}")
