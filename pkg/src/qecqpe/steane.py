"""[[7,1,3]] color-code blocks: preparation, Cliffords, detection, teleported
rotations.

Conventions (fixed by the encoder below and checked in the test suite):

* Stabilizer cells ``CELLS[i]`` support both the X- and Z-type generators.
* ``Z_L = Z1 Z3 Z5`` and ``X_L = X1 X3 X5``; a transversal readout decodes to
  the logical bit via cell parities and a single-qubit correction.
* Syndrome columns form the parity-check matrix of a perfect Hamming code:
  every weight-one error has a unique signature.

All builders append nothing themselves: they allocate classical bits from the
``CircuitBuilder`` they are given and return instruction lists, so gadgets
compose into conditional bodies and retry loops without special cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .circuit import (
    CircuitBuilder,
    Conditional,
    Instruction,
    Measure,
    ParityTest,
    Predicate,
    RepeatUntil,
    Reset,
    Unitary,
)

__all__ = [
    "CELLS",
    "LOGICAL_SUPPORT",
    "SYNDROME_COLUMNS",
    "SteaneBlock",
    "BinaryFractionAngle",
    "ReadoutDecode",
    "decode_readout",
    "logical_one_predicate",
    "encoder_ops",
    "encode_zero_ops",
    "encode_plus_ops",
    "transversal_ops",
    "logical_cx_ops",
    "measure_block_ops",
    "qec_ops",
    "qed_ops",
    "rz_direct_ops",
    "prepare_theta_ops",
    "rz_teleport_ops",
    "FaultRow",
    "rotation_fault_table",
]

CELLS: tuple[tuple[int, ...], ...] = ((0, 1, 2, 3), (1, 2, 4, 5), (2, 3, 5, 6))
LOGICAL_SUPPORT: tuple[int, ...] = (1, 3, 5)

SYNDROME_COLUMNS: dict[int, tuple[int, int, int]] = {
    0: (1, 0, 0),
    1: (1, 1, 0),
    2: (1, 1, 1),
    3: (1, 0, 1),
    4: (0, 1, 0),
    5: (0, 1, 1),
    6: (0, 0, 1),
}

_CORRECTION: dict[tuple[int, int, int], Optional[int]] = {
    col: q for q, col in SYNDROME_COLUMNS.items()
}
_CORRECTION[(0, 0, 0)] = None

# |0_L> circuit: three plus-states fanned out so every stabilizer cell closes.
_ENCODER: tuple[tuple, ...] = (
    ("H", 0), ("H", 4), ("H", 6),
    ("CX", 0, 1), ("CX", 6, 3),
    ("CX", 0, 3), ("CX", 4, 5),
    ("CX", 4, 2), ("CX", 6, 5),
    ("CX", 4, 1),
    ("CX", 3, 2),
)


@dataclass(frozen=True, slots=True)
class SteaneBlock:
    """Seven physical qubits; position i in the tuple is code qubit i."""

    qubits: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.qubits) != 7 or len(set(self.qubits)) != 7:
            raise ValueError(f"need 7 distinct qubits, got {self.qubits}")

    def __getitem__(self, i: int) -> int:
        return self.qubits[i]

    def __iter__(self):
        return iter(self.qubits)


@dataclass(frozen=True, slots=True)
class BinaryFractionAngle:
    """Rotation angle on the dyadic grid m*pi/32, m taken mod 64.

    Doubling stays on the grid, so a teleported rotation that fails with the
    wrong byproduct can always retry with ``doubled()`` until the angle is
    Clifford (a multiple of pi/2, i.e. m % 16 == 0) — at most four rounds
    from any odd m.
    """

    m: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "m", self.m % 64)

    @classmethod
    def from_angle(cls, theta: float) -> "BinaryFractionAngle":
        """Nearest grid point to ``theta`` (radians)."""
        return cls(round(theta * 32.0 / math.pi))

    @property
    def theta(self) -> float:
        # signed representative in [-pi, pi)
        return ((self.m + 32) % 64 - 32) * math.pi / 32.0

    @property
    def is_clifford(self) -> bool:
        return self.m % 16 == 0

    @property
    def quarter_turns(self) -> int:
        """How many S_L gates the angle equals, valid when Clifford."""
        if not self.is_clifford:
            raise ValueError(f"m={self.m} is not a multiple of pi/2")
        return self.m // 16

    def __neg__(self) -> "BinaryFractionAngle":
        return BinaryFractionAngle(-self.m)

    def doubled(self) -> "BinaryFractionAngle":
        return BinaryFractionAngle(2 * self.m)

    def ladder_depth(self) -> int:
        """Teleport rounds until the remaining correction is Clifford."""
        depth, a = 0, self
        while not a.is_clifford:
            depth += 1
            a = a.doubled()
        return depth


# ---------------------------------------------------------------------------
# Transversal readout decoding

@dataclass(frozen=True, slots=True)
class ReadoutDecode:
    syndrome: tuple[int, int, int]
    correction: Optional[int]        # code qubit flipped by the decoder
    logical: int


def decode_readout(bits: Sequence[int]) -> ReadoutDecode:
    """Cell parities -> unique weight-one correction -> logical bit."""
    if len(bits) != 7:
        raise ValueError(f"need 7 readout bits, got {len(bits)}")
    syndrome = tuple(sum(bits[q] for q in cell) % 2 for cell in CELLS)
    corr = _CORRECTION[syndrome]
    logical = bits[1] ^ bits[3] ^ bits[5]
    if corr in LOGICAL_SUPPORT:
        logical ^= 1
    return ReadoutDecode(syndrome, corr, logical)


def logical_one_predicate(clbits: Sequence[int]) -> Predicate:
    """Guard that fires exactly when ``decode_readout`` would return 1.

    One clause per possible syndrome: the three cell parities pin the
    syndrome and the support parity supplies the raw bit, adjusted when the
    decoder's correction lands on the logical support.
    """
    if len(clbits) != 7:
        raise ValueError(f"need 7 classical bits, got {len(clbits)}")
    cells_cl = [tuple(clbits[q] for q in cell) for cell in CELLS]
    support_cl = tuple(clbits[q] for q in LOGICAL_SUPPORT)
    clauses = []
    for syndrome, corr in _CORRECTION.items():
        raw = 1 ^ (1 if corr in LOGICAL_SUPPORT else 0)
        clauses.append(
            tuple(ParityTest(cells_cl[i], syndrome[i]) for i in range(3))
            + (ParityTest(support_cl, raw),)
        )
    return Predicate.any_clause(clauses)


# ---------------------------------------------------------------------------
# Preparation

def _gate(block: SteaneBlock, spec: tuple) -> Unitary:
    if spec[0] == "H":
        return Unitary("H", (block[spec[1]],))
    return Unitary("CX", (block[spec[1]], block[spec[2]]))


def encoder_ops(block: SteaneBlock) -> list[Instruction]:
    """The bare |0_L> encoding circuit (no resets, no verification)."""
    return [_gate(block, s) for s in _ENCODER]


def encode_zero_ops(
    b: CircuitBuilder,
    block: SteaneBlock,
    *,
    ft: bool = True,
    verify: Optional[int] = None,
    max_attempts: int = 5,
) -> list[Instruction]:
    """Prepare |0_L>, optionally verified against the dressing the bare
    encoder cannot catch.

    The verification couples the Z_L support {1, 3, 5} into one ancilla and
    retries the whole preparation (resets included) until the check reads 0;
    exhausting the attempts discards the shot.
    """
    ops: list[Instruction] = [Reset(q) for q in block]
    ops += encoder_ops(block)
    if not ft:
        return ops
    if verify is None:
        raise ValueError("fault-tolerant preparation needs a verify qubit")
    flag = b.new_clbit()
    ops.append(Reset(verify))
    for q in LOGICAL_SUPPORT:
        ops.append(Unitary("CX", (block[q], verify)))
    ops.append(Measure(verify, flag))
    return [
        RepeatUntil(tuple(ops), max_iters=max_attempts, clbit=flag, target=0)
    ]


def encode_plus_ops(
    b: CircuitBuilder,
    block: SteaneBlock,
    *,
    ft: bool = True,
    verify: Optional[int] = None,
    max_attempts: int = 5,
) -> list[Instruction]:
    """|+_L| = transversal H after a (verified) |0_L> preparation."""
    ops = encode_zero_ops(b, block, ft=ft, verify=verify, max_attempts=max_attempts)
    return ops + transversal_ops(block, "H")


# ---------------------------------------------------------------------------
# Logical Cliffords and readout

_TRANSVERSAL = {
    "X": ("X", LOGICAL_SUPPORT),
    "Z": ("Z", LOGICAL_SUPPORT),
    "H": ("H", tuple(range(7))),
    # phase gates act antitransversally on this CSS code
    "S": ("Sdg", tuple(range(7))),
    "Sdg": ("S", tuple(range(7))),
}


def transversal_ops(block: SteaneBlock, name: str) -> list[Instruction]:
    """Logical X/Z/H/S/Sdg as physical layers."""
    try:
        phys, where = _TRANSVERSAL[name]
    except KeyError:
        raise ValueError(f"no transversal implementation for {name!r}") from None
    return [Unitary(phys, (block[q],)) for q in where]


def logical_cx_ops(control: SteaneBlock, target: SteaneBlock) -> list[Instruction]:
    return [Unitary("CX", (control[i], target[i])) for i in range(7)]


def measure_block_ops(
    block: SteaneBlock, clbits: Sequence[int], basis: str = "z"
) -> list[Instruction]:
    """Transversal readout; decode with ``decode_readout`` afterwards."""
    if len(clbits) != 7:
        raise ValueError(f"need 7 classical bits, got {len(clbits)}")
    ops: list[Instruction] = []
    if basis == "x":
        ops += transversal_ops(block, "H")
    elif basis != "z":
        raise ValueError(f"basis must be z|x, got {basis!r}")
    ops += [Measure(block[i], clbits[i]) for i in range(7)]
    return ops


# ---------------------------------------------------------------------------
# Error correction (syndrome extraction against a fresh logical ancilla)

def _syndrome_guard(cs: Sequence[int], column: tuple[int, int, int]) -> Predicate:
    cells_cl = [tuple(cs[q] for q in cell) for cell in CELLS]
    return Predicate.all_of(
        *(ParityTest(cells_cl[i], column[i]) for i in range(3))
    )


def qec_ops(
    b: CircuitBuilder,
    block: SteaneBlock,
    aux: SteaneBlock,
    *,
    verify: int,
    kind: str = "x",
    max_attempts: int = 5,
) -> list[Instruction]:
    """One round of syndrome extraction and correction on ``block``.

    kind "x": the aux block is prepared in |0_L>, coupled aux->data, and read
    out transversally in the X basis; cell parities of the readout are the
    phase-error syndrome and the matched column fixes a Z on one data qubit.
    kind "z" mirrors it (|+_L> aux, data->aux coupling, Z-basis readout,
    X corrections).  kind "xz" runs both, reusing the aux block.

    Coupling and readout are interleaved qubit by qubit — adjacent
    disjoint-support operations commute, and the simulator's factored state
    stays narrow that way.
    """
    if kind == "xz":
        return qec_ops(
            b, block, aux, verify=verify, kind="x", max_attempts=max_attempts
        ) + qec_ops(
            b, block, aux, verify=verify, kind="z", max_attempts=max_attempts
        )
    if kind not in ("x", "z"):
        raise ValueError(f"kind must be x|z|xz, got {kind!r}")
    cs = b.new_clbits(7)
    ops: list[Instruction]
    if kind == "x":
        ops = encode_zero_ops(b, aux, ft=True, verify=verify,
                              max_attempts=max_attempts)
        for i in range(7):
            ops.append(Unitary("CX", (aux[i], block[i])))
            ops.append(Unitary("H", (aux[i],)))
            ops.append(Measure(aux[i], cs[i]))
        fix = "Z"
    else:
        ops = encode_plus_ops(b, aux, ft=True, verify=verify,
                              max_attempts=max_attempts)
        for i in range(7):
            ops.append(Unitary("CX", (block[i], aux[i])))
            ops.append(Measure(aux[i], cs[i]))
        fix = "X"
    for q in range(7):
        ops.append(
            Conditional(
                _syndrome_guard(cs, SYNDROME_COLUMNS[q]),
                (Unitary(fix, (block[q],)),),
            )
        )
    return ops


# ---------------------------------------------------------------------------
# Error detection (two flagged cells watching the rotation support)

def qed_ops(
    b: CircuitBuilder,
    block: SteaneBlock,
    cell_index: int,
    ancillas: tuple[int, int],
) -> tuple[list[Instruction], tuple[int, int]]:
    """Joint X- and Z-parity check of one stabilizer cell.

    ``ancillas[0]`` collects the cell's Z parity through data->ancilla
    couplings; ``ancillas[1]`` probes the X parity in the conjugate basis.
    The interleaving alternates which ancilla touches each cell qubit first,
    so each ancilla also flags faults of the other's couplings.  Returns
    (ops, (z_check_bit, x_check_bit)); any nonzero bit means the cell is
    suspect and the caller discards or retries.
    """
    if cell_index not in (0, 1):
        raise ValueError(f"cell_index must be 0 or 1, got {cell_index}")
    b0, b1, b2, b3 = (block[q] for q in CELLS[cell_index])
    a0, a1 = ancillas
    c0, c1 = b.new_clbit(), b.new_clbit()
    ops: list[Instruction] = [
        Reset(a0),
        Reset(a1),
        Unitary("H", (a1,)),
        Unitary("CX", (a1, b0)),
        Unitary("CX", (b0, a0)),
        Unitary("CX", (b1, a0)),
        Unitary("CX", (a1, b1)),
        Unitary("CX", (a1, b2)),
        Unitary("CX", (b2, a0)),
        Unitary("CX", (b3, a0)),
        Unitary("CX", (a1, b3)),
        Unitary("H", (a1,)),
        Measure(a0, c0),
        Measure(a1, c1),
    ]
    return ops, (c0, c1)


# ---------------------------------------------------------------------------
# Encoded Z rotations

def rz_direct_ops(block: SteaneBlock, theta: float) -> list[Instruction]:
    """exp(-i theta/2 Z0 Z1 Z4) via one ZZ interaction — equal to the logical
    Z rotation, since Z0 Z1 Z4 is Z_L times two stabilizer cells."""
    return [
        Unitary("CX", (block[4], block[1])),
        Unitary("RZZ", (block[0], block[1]), theta),
        Unitary("CX", (block[4], block[1])),
    ]


def prepare_theta_ops(
    b: CircuitBuilder,
    block: SteaneBlock,
    angle: BinaryFractionAngle,
    *,
    mode: str = "qed",
    verify: Optional[int] = None,
    qed_ancillas: Optional[tuple[int, int]] = None,
    qed_attempts: int = 2,
) -> list[Instruction]:
    """Resource state R_Z(theta)|+_L> on ``block``.

    mode "noqed": the rotation folds into the encoder — an XX interaction on
    code qubits (3, 4) where the fan-out makes it logically diagonal — and a
    closing transversal H.  Nine entangling gates, no checks.

    mode "qed": verified |0_L>, transversal H, the direct rotation, then the
    flagged parity checks of the two cells covering the rotation support;
    any flag retries the whole preparation (``qed_attempts`` rounds), and
    exhaustion discards the shot.
    """
    if mode == "noqed":
        ops: list[Instruction] = [Reset(q) for q in block]
        for spec in _ENCODER:
            ops.append(_gate(block, spec))
            if spec == ("CX", 4, 1):
                ops.append(Unitary("RXX", (block[3], block[4]), angle.theta))
        ops += transversal_ops(block, "H")
        return ops
    if mode != "qed":
        raise ValueError(f"mode must be qed|noqed, got {mode!r}")
    if verify is None or qed_ancillas is None:
        raise ValueError("qed preparation needs verify and qed_ancillas")
    body = encode_zero_ops(b, block, ft=True, verify=verify)
    body += transversal_ops(block, "H")
    body += rz_direct_ops(block, angle.theta)
    checks: list[int] = []
    for cell_index in (0, 1):
        ops_i, bits = qed_ops(b, block, cell_index, qed_ancillas)
        body += ops_i
        checks += list(bits)
    clean = Predicate.all_of(*(ParityTest((c,), 0) for c in checks))
    return [
        RepeatUntil(
            tuple(body), max_iters=qed_attempts, until=clean, on_exhaust="discard"
        )
    ]


def _terminal_clifford_ops(block: SteaneBlock, angle: BinaryFractionAngle
                           ) -> list[Instruction]:
    ops: list[Instruction] = []
    r = angle.quarter_turns
    if r == 1:
        ops += transversal_ops(block, "S")
    elif r == 2:
        ops += transversal_ops(block, "Z")
    elif r == 3:
        ops += transversal_ops(block, "Sdg")
    return ops


def rz_teleport_ops(
    b: CircuitBuilder,
    data: SteaneBlock,
    resource: SteaneBlock,
    angle: BinaryFractionAngle,
    *,
    mode: str = "qed",
    verify: Optional[int] = None,
    qed_ancillas: Optional[tuple[int, int]] = None,
) -> list[Instruction]:
    """Repeat-until-success logical R_Z(theta) by gate teleportation.

    Couple the data block into a fresh R_Z(theta)|+_L> resource and read the
    resource out transversally.  A decoded 0 means the rotation landed; a
    decoded 1 leaves R_Z(-theta) instead, so the correction is the doubled
    angle — prepared and teleported again, recursively, until the required
    correction is Clifford and applied directly.
    """
    if angle.is_clifford:
        return _terminal_clifford_ops(data, angle)
    ops = prepare_theta_ops(
        b, resource, angle,
        mode=mode, verify=verify, qed_ancillas=qed_ancillas,
    )
    cs = b.new_clbits(7)
    for i in range(7):
        ops.append(Unitary("CX", (data[i], resource[i])))
        ops.append(Measure(resource[i], cs[i]))
    retry = rz_teleport_ops(
        b, data, resource, angle.doubled(),
        mode=mode, verify=verify, qed_ancillas=qed_ancillas,
    )
    ops.append(Conditional(logical_one_predicate(cs), tuple(retry)))
    return ops


# ---------------------------------------------------------------------------
# Fault propagation through the direct rotation

@dataclass(frozen=True, slots=True)
class FaultRow:
    slot: int                 # 1 after first CX, 2 after ZZ, 3 after last CX
    error: str                # injected Pauli, e.g. "Z4", "X1Y4"
    propagated: str           # what reaches the end of the gadget
    flips_angle: int          # 1 if the remaining ZZ rotation flips sign
    syndrome: str             # "a(b)cd" over the two checked cells


def _pauli_masks(label_qubits: tuple[int, int], pa: str, pb: str
                 ) -> tuple[int, int]:
    x = z = 0
    for q, p in zip(label_qubits, (pa, pb)):
        if p in ("X", "Y"):
            x |= 1 << q
        if p in ("Z", "Y"):
            z |= 1 << q
    return x, z


def _cx_conj(x: int, z: int, c: int, t: int) -> tuple[int, int]:
    # X on the control spreads to the target; Z on the target to the control.
    if x & (1 << c):
        x ^= 1 << t
    if z & (1 << t):
        z ^= 1 << c
    return x, z


def _pauli_label(x: int, z: int) -> str:
    if x == 0 and z == 0:
        return "I"
    out = []
    for q in range(7):
        has_x = bool(x & (1 << q))
        has_z = bool(z & (1 << q))
        if has_x and has_z:
            out.append(f"Y{q}")
        elif has_x:
            out.append(f"X{q}")
        elif has_z:
            out.append(f"Z{q}")
    return "".join(out)


def _cell_syndrome(x: int, z: int) -> str:
    # Detected parities on the two cells the preparation checks: the X-type
    # check sees Z components, the Z-type check sees X components.
    sx = []
    sz = []
    for cell in CELLS[:2]:
        mask = sum(1 << q for q in cell)
        sx.append(bin(z & mask).count("1") % 2)
        sz.append(bin(x & mask).count("1") % 2)
    return f"{sx[0]}({sx[1]}){sz[0]}{sz[1]}"


_PAULI_PAIRS = [
    (a, b) for a in "IXYZ" for b in "IXYZ" if (a, b) != ("I", "I")
]


def rotation_fault_table() -> list[FaultRow]:
    """All 45 single-fault outcomes of the direct-rotation gadget.

    A two-qubit Pauli is injected after each of the three entangling steps
    (on that step's support) and conjugated through the remaining Cliffords;
    an error anticommuting with the ZZ axis before the rotation runs flips
    its sign.  The syndrome column shows what the two flagged cell checks
    would see afterwards.
    """
    rows: list[FaultRow] = []
    slots = (
        (1, (1, 4), True),   # after the first CX: ZZ and final CX remain
        (2, (0, 1), True),   # after the ZZ: final CX remains
        (3, (1, 4), False),  # after the final CX: nothing remains
    )
    for slot, support, through_cx in slots:
        for pa, pb in _PAULI_PAIRS:
            x, z = _pauli_masks(support, pa, pb)
            error = _pauli_label(x, z)
            flips = 0
            if slot == 1:
                # anticommutes with Z0 Z1 iff it has odd X weight there
                flips = bin(x & 0b11).count("1") % 2
            if through_cx:
                x, z = _cx_conj(x, z, 4, 1)
            rows.append(
                FaultRow(slot, error, _pauli_label(x, z), flips,
                         _cell_syndrome(x, z))
            )
    return rows
