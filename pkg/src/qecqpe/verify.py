"""Independent conformance checks for the encoded gadget library.

Every check here recomputes its expected answer from scratch rather than
trusting the code under test: the rotation fault table is compared against
dense 128-dimensional operator conjugation, and each circuit gadget runs
under a small dense interpreter whose measurement outcomes can be forced,
so teleportation byproduct paths are enumerated exhaustively instead of
sampled.  References (codewords, rotated logical states) are built from
the stabilizer definition alone.

``qecqpe verify`` prints one line per check; the long-running end-to-end
suites call the same functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .circuit import (
    CircuitBuilder,
    Conditional,
    Discard,
    IdleBarrier,
    Instruction,
    Measure,
    RepeatUntil,
    Reset,
    Unitary,
)
from .statevector import StateVector
from .steane import (
    CELLS,
    LOGICAL_SUPPORT,
    BinaryFractionAngle,
    SteaneBlock,
    encode_plus_ops,
    encode_zero_ops,
    logical_cx_ops,
    prepare_theta_ops,
    qec_ops,
    qed_ops,
    rotation_fault_table,
    rz_direct_ops,
    rz_teleport_ops,
    transversal_ops,
)

__all__ = [
    "CheckResult",
    "check_fault_table",
    "check_encodings",
    "check_cliffords",
    "check_corrections",
    "check_parity_flags",
    "check_direct_rotations",
    "check_resource_states",
    "check_teleported_rotations",
    "check_byproduct_paths",
    "run_all",
]


@dataclass(frozen=True, slots=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


def _result(name: str, n_cases: int, bad: list[str], what: str) -> CheckResult:
    if not bad:
        return CheckResult(name, True, f"{n_cases}/{n_cases} {what}")
    shown = "; ".join(bad[:3])
    more = f" (+{len(bad) - 3} more)" if len(bad) > 3 else ""
    return CheckResult(
        name, False, f"{n_cases - len(bad)}/{n_cases} {what} — {shown}{more}"
    )


# ---------------------------------------------------------------------------
# Dense references, built from the stabilizer definition only

_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _pauli_on(qubits: Sequence[int], letters: str) -> np.ndarray:
    """Dense 7-qubit operator with letters[i] on qubits[i] (little-endian)."""
    table = dict(zip(qubits, letters))
    out = np.array([[1.0 + 0j]])
    for q in range(7):
        out = np.kron(_1Q.get(table.get(q, "I"), _1Q["I"]), out)
    return out


def _codeword_zero() -> np.ndarray:
    proj = np.eye(128, dtype=complex)
    for cell in CELLS:
        for letter in "XZ":
            proj = proj @ (np.eye(128) + _pauli_on(cell, letter * 4)) / 2.0
    v = proj[:, 0]
    return v / np.linalg.norm(v)


_ZERO_L = _codeword_zero()
_ONE_L = _pauli_on(LOGICAL_SUPPORT, "XXX") @ _ZERO_L
_STABILIZERS = tuple(
    "".join(letter if q in cell else "I" for q in range(7))
    for cell in CELLS
    for letter in "XZ"
)


def _logical(c0: complex, c1: complex) -> np.ndarray:
    v = c0 * _ZERO_L + c1 * _ONE_L
    return v / np.linalg.norm(v)


def _rz_ref(theta: float, c0: complex, c1: complex) -> np.ndarray:
    return _logical(
        c0 * np.exp(-0.5j * theta), c1 * np.exp(0.5j * theta)
    )


# generic logical input used throughout: no symmetry with any gadget
_A, _B = 0.55, 0.6 + 0.58j


def _fidelity(a: np.ndarray, b: np.ndarray) -> float:
    return abs(np.vdot(a, b)) ** 2


# ---------------------------------------------------------------------------
# Dense interpreter with outcome forcing

class _DiscardedRun(Exception):
    pass


class _Interp:
    """Noiseless dense run of a gadget circuit.

    Measurements pop ``force`` while it lasts (postselecting that branch),
    then fall back to the likelier branch (mode "greedy") or Born sampling
    (mode "random").  Resets must only ever see basis-state qubits, which
    holds for every gadget here.
    """

    def __init__(self, num_qubits: int, force: Sequence[int] = (),
                 mode: str = "greedy", seed: int = 0):
        self.sv = StateVector(num_qubits)
        self.clbits: dict[int, int] = {}
        self.force = list(force)
        self.mode = mode
        self.rng = np.random.default_rng(seed)

    def seed_state(self, block_state: np.ndarray) -> "_Interp":
        """Put ``block_state`` on the low qubits, the rest stay |0>."""
        amps = np.zeros_like(self.sv.amplitudes)
        amps[: block_state.size] = block_state
        self.sv.amplitudes = amps
        return self

    def _measure(self, qubit: int, clbit: int) -> None:
        p1 = self.sv.prob_one(qubit)
        if self.force:
            bit = self.force.pop(0)
        elif self.mode == "greedy":
            bit = 1 if p1 > 0.5 else 0
        else:
            bit = 1 if self.rng.random() < p1 else 0
        p_keep = p1 if bit else 1.0 - p1
        if p_keep <= 1e-12:
            raise AssertionError(
                f"forced impossible outcome {bit} on qubit {qubit}"
            )
        kernels.project(self.sv.amplitudes, qubit, bit, 1.0 / math.sqrt(p_keep))
        self.clbits[clbit] = bit

    def run(self, ops: Sequence[Instruction]) -> "_Interp":
        for ins in ops:
            if isinstance(ins, Unitary):
                self.sv.apply_unitary(ins.name, ins.qubits, ins.angle)
            elif isinstance(ins, Measure):
                self._measure(ins.qubit, ins.clbit)
            elif isinstance(ins, Reset):
                p1 = self.sv.prob_one(ins.qubit)
                if p1 > 1.0 - 1e-12:
                    kernels.project(self.sv.amplitudes, ins.qubit, 1, 1.0)
                    self.sv.apply_pauli(ins.qubit, "X")
                elif p1 >= 1e-12:
                    raise AssertionError(f"reset on superposed qubit {ins.qubit}")
            elif isinstance(ins, Conditional):
                if ins.guard.evaluate(self.clbits):
                    self.run(ins.body)
            elif isinstance(ins, RepeatUntil):
                for _ in range(ins.max_iters):
                    self.run(ins.body)
                    if ins.condition().evaluate(self.clbits):
                        break
                else:
                    if ins.on_exhaust == "discard":
                        raise _DiscardedRun
            elif isinstance(ins, Discard):
                raise _DiscardedRun
            elif not isinstance(ins, IdleBarrier):
                raise AssertionError(f"unexpected instruction {ins!r}")
        return self

    def low_state(self, width: int = 7) -> np.ndarray:
        """Pure state of qubits 0..width-1; the rest must sit in one basis
        state (true after transversal readout or on untouched ancillas)."""
        rows = self.sv.amplitudes.reshape(-1, 1 << width)
        weights = np.sum(np.abs(rows) ** 2, axis=1)
        top = int(np.argmax(weights))
        if weights[top] < 1.0 - 1e-9:
            raise AssertionError("residual entanglement with ancilla qubits")
        return rows[top] / math.sqrt(weights[top])

    def min_stabilizer(self, width: int = 7) -> float:
        state = self.low_state(width)
        sv = StateVector(7)
        sv.amplitudes = np.ascontiguousarray(state)
        return min(sv.expectation_pauli(p) for p in _STABILIZERS)


_BLOCK = SteaneBlock(tuple(range(7)))
_AUX = SteaneBlock(tuple(range(7, 14)))


def _conforms(interp: _Interp, ref: np.ndarray, label: str,
              bad: list[str], width: int = 7) -> None:
    try:
        got = interp.low_state(width)
    except AssertionError as exc:
        bad.append(f"{label}: {exc}")
        return
    fid = _fidelity(got, ref)
    if not fid >= 1.0 - 1e-9:
        bad.append(f"{label}: fidelity {fid:.2e}")
        return
    if width == 7:
        smin = interp.min_stabilizer()
        if not smin >= 1.0 - 1e-9:
            bad.append(f"{label}: stabilizer expectation {smin:.2e}")


# ---------------------------------------------------------------------------
# Fault table

def _label_op(label: str) -> np.ndarray:
    out = np.eye(128, dtype=complex)
    if label == "I":
        return out
    for i in range(0, len(label), 2):
        out = out @ _pauli_on((int(label[i + 1]),), label[i])
    return out


def _support(label: str, letters: str) -> set[int]:
    if label == "I":
        return set()
    return {
        int(label[i + 1])
        for i in range(0, len(label), 2)
        if label[i] in letters
    }


def check_fault_table(rows=None) -> CheckResult:
    """Re-derive every row of the rotation fault table densely.

    ``rows`` defaults to the library's table; passing a modified copy must
    make the mismatching rows show up in the failure detail.
    """
    if rows is None:
        rows = rotation_fault_table()
    bad: list[str] = []
    per_slot = {1: 0, 2: 0, 3: 0}
    cx41 = np.zeros((128, 128), dtype=complex)
    for idx in range(128):
        cx41[idx ^ (((idx >> 4) & 1) << 1), idx] = 1.0
    zz01 = _pauli_on((0, 1), "ZZ")
    for row in rows:
        per_slot[row.slot] = per_slot.get(row.slot, 0) + 1
        wrong: list[str] = []
        injected = _label_op(row.error)
        propagated = cx41 @ injected @ cx41 if row.slot in (1, 2) else injected
        overlap = abs(np.trace(_label_op(row.propagated).conj().T @ propagated))
        if abs(overlap - 128.0) > 1e-6:
            wrong.append(f"propagated is not {row.propagated}")
        anti = np.linalg.norm(injected @ zz01 + zz01 @ injected) < 1e-12
        flips = int(anti) if row.slot == 1 else 0
        if row.flips_angle != flips:
            wrong.append(f"sign flip should be {flips}")
        zq = _support(row.propagated, "YZ")
        xq = _support(row.propagated, "XY")
        sx = [len(zq & set(CELLS[i])) % 2 for i in range(2)]
        sz = [len(xq & set(CELLS[i])) % 2 for i in range(2)]
        want = f"{sx[0]}({sx[1]}){sz[0]}{sz[1]}"
        if row.syndrome != want:
            wrong.append(f"syndrome should be {want}")
        if wrong:
            bad.append(f"slot {row.slot} {row.error}: " + ", ".join(wrong))
    if len(rows) != 45 or any(per_slot.get(s, 0) != 15 for s in (1, 2, 3)):
        bad.append(
            f"row census {len(rows)} ({per_slot}) instead of 45 (15 per slot)"
        )
    return _result("fault-table", len(rows), bad, "rows match dense conjugation")


# ---------------------------------------------------------------------------
# Preparations and Cliffords

def check_encodings() -> CheckResult:
    bad: list[str] = []
    plus = _logical(1 / math.sqrt(2), 1 / math.sqrt(2))
    cases = [
        ("zero bare", encode_zero_ops, False, _ZERO_L),
        ("zero verified", encode_zero_ops, True, _ZERO_L),
        ("plus bare", encode_plus_ops, False, plus),
        ("plus verified", encode_plus_ops, True, plus),
    ]
    for label, build, ft, ref in cases:
        b = CircuitBuilder(8)
        ops = build(b, _BLOCK, ft=ft, verify=7 if ft else None)
        _conforms(_Interp(8).run(ops), ref, label, bad)
    return _result("encodings", len(cases), bad, "preparations in codespace")


def check_cliffords() -> CheckResult:
    bad: list[str] = []
    a, b_ = _A, _B
    r = 1 / math.sqrt(2)
    single = [
        ("H", _logical((a + b_) * r, (a - b_) * r)),
        ("S", _logical(a, 1j * b_)),
        ("Sdg", _logical(a, -1j * b_)),
        ("X", _logical(b_, a)),
        ("Z", _logical(a, -b_)),
    ]
    n_cases = len(single) + 2
    for name, ref in single:
        interp = _Interp(7).seed_state(_logical(a, b_))
        _conforms(interp.run(transversal_ops(_BLOCK, name)), ref, name, bad)

    # entangler: |+>_L |0>_L -> logical Bell pair (control on the low block)
    bell = (np.kron(_ZERO_L, _ZERO_L) + np.kron(_ONE_L, _ONE_L)) * r
    interp = _Interp(14).seed_state(np.kron(_ZERO_L, _logical(r, r)))
    _conforms(interp.run(logical_cx_ops(_BLOCK, _AUX)), bell, "CX bell", bad,
              width=14)

    # and on a generic product state
    c0, c1 = 0.8, 0.6j
    ref = a * (c0 * np.kron(_ZERO_L, _ZERO_L) + c1 * np.kron(_ONE_L, _ZERO_L))
    ref = ref + b_ * (c0 * np.kron(_ONE_L, _ONE_L) + c1 * np.kron(_ZERO_L, _ONE_L))
    ref = ref / np.linalg.norm(ref)
    interp = _Interp(14).seed_state(np.kron(_logical(c0, c1), _logical(a, b_)))
    _conforms(interp.run(logical_cx_ops(_BLOCK, _AUX)), ref, "CX generic", bad,
              width=14)
    return _result("transversal-cliffords", n_cases, bad, "logical actions match")


# ---------------------------------------------------------------------------
# Correction and detection rounds

def check_corrections(seed: int = 0) -> CheckResult:
    bad: list[str] = []
    state = _logical(_A, _B)
    cases: list[tuple[str, Optional[tuple[int, str]]]] = [("x", None), ("z", None)]
    cases += [("x", (q, "Z")) for q in range(7)]
    cases += [("z", (q, "X")) for q in range(7)]
    cases += [("xz", (3, "Y"))]
    n = 0
    for kind, error in cases:
        for s in (seed, seed + 1):
            n += 1
            label = f"QEC_{kind} {error or 'clean'} seed {s}"
            b = CircuitBuilder(15)
            ops = qec_ops(b, _BLOCK, _AUX, verify=14, kind=kind)
            interp = _Interp(15, mode="random", seed=s).seed_state(state)
            if error is not None:
                interp.sv.apply_pauli(*error)
            try:
                interp.run(ops)
            except _DiscardedRun:
                bad.append(f"{label}: discarded")
                continue
            _conforms(interp, state, label, bad)
    return _result("error-correction", n, bad, "rounds restore the state")


def check_parity_flags() -> CheckResult:
    """Cell checks must fire exactly for the error components they cover."""
    bad: list[str] = []
    state = _logical(_A, _B)
    n = 0
    for cell_index in (0, 1):
        cell = set(CELLS[cell_index])
        outside = min(set(range(7)) - cell)
        probes: list[tuple[Optional[tuple[int, str]], tuple[int, int]]] = [
            (None, (0, 0)),
            ((outside, "Z"), (0, 0)),
        ]
        for q in sorted(cell):
            probes += [
                ((q, "X"), (1, 0)),
                ((q, "Z"), (0, 1)),
                ((q, "Y"), (1, 1)),
            ]
        for error, want in probes:
            n += 1
            label = f"cell {cell_index} {error or 'clean'}"
            b = CircuitBuilder(9)
            ops, bits = qed_ops(b, _BLOCK, cell_index, (7, 8))
            interp = _Interp(9).seed_state(state)
            if error is not None:
                interp.sv.apply_pauli(*error)
            interp.run(ops)
            got = (interp.clbits[bits[0]], interp.clbits[bits[1]])
            if got != want:
                bad.append(f"{label}: flags {got}, expected {want}")
                continue
            if error is None:
                _conforms(interp, state, label, bad)
    return _result("parity-flags", n, bad, "flag patterns as expected")


# ---------------------------------------------------------------------------
# Rotations

def check_direct_rotations() -> CheckResult:
    bad: list[str] = []
    n = 0
    for m in range(64):
        theta = BinaryFractionAngle(m).theta
        ref = _rz_ref(theta, _A, _B)

        n += 1
        interp = _Interp(7).seed_state(_logical(_A, _B))
        interp.run(rz_direct_ops(_BLOCK, theta))
        _conforms(interp, ref, f"direct m={m}", bad)

        # checked variant: the rotation plus both covering-cell probes
        n += 1
        b = CircuitBuilder(9)
        ops = list(rz_direct_ops(_BLOCK, theta))
        flag_bits: list[int] = []
        for cell_index in (0, 1):
            cell_ops, bits = qed_ops(b, _BLOCK, cell_index, (7, 8))
            ops += cell_ops
            flag_bits += list(bits)
        interp = _Interp(9).seed_state(_logical(_A, _B)).run(ops)
        if any(interp.clbits[c] for c in flag_bits):
            bad.append(f"checked m={m}: clean run raised a flag")
        else:
            _conforms(interp, ref, f"checked m={m}", bad)
    return _result("direct-rotations", n, bad, "rotations match the reference")


def check_resource_states() -> CheckResult:
    bad: list[str] = []
    r = 1 / math.sqrt(2)
    n = 0
    for m in range(64):
        theta = BinaryFractionAngle(m).theta
        ref = _rz_ref(theta, r, r)
        for mode in ("noqed", "qed"):
            n += 1
            b = CircuitBuilder(10)
            kwargs = {} if mode == "noqed" else {
                "verify": 7, "qed_ancillas": (8, 9)
            }
            ops = prepare_theta_ops(
                b, _BLOCK, BinaryFractionAngle(m), mode=mode, **kwargs
            )
            try:
                interp = _Interp(10).run(ops)
            except _DiscardedRun:
                bad.append(f"{mode} m={m}: discarded")
                continue
            _conforms(interp, ref, f"{mode} m={m}", bad)
    return _result("resource-states", n, bad, "preparations match the reference")


def _teleport_circuit(m: int, mode: str) -> tuple[int, list[Instruction]]:
    if mode == "noqed":
        num_qubits = 14
        kwargs = {}
    else:
        num_qubits = 16
        kwargs = {"verify": 14, "qed_ancillas": (14, 15)}
    b = CircuitBuilder(num_qubits)
    ops = rz_teleport_ops(
        b, _BLOCK, _AUX, BinaryFractionAngle(m), mode=mode, **kwargs
    )
    return num_qubits, ops


def check_teleported_rotations(seed: int = 0) -> CheckResult:
    bad: list[str] = []
    n = 0
    for m in range(64):
        ref = _rz_ref(BinaryFractionAngle(m).theta, _A, _B)
        for mode in ("noqed", "qed"):
            n += 1
            nq, ops = _teleport_circuit(m, mode)
            interp = _Interp(nq, mode="random", seed=seed + 2 * m)
            interp.seed_state(_logical(_A, _B))
            try:
                interp.run(ops)
            except _DiscardedRun:
                bad.append(f"{mode} m={m}: discarded")
                continue
            _conforms(interp, ref, f"{mode} m={m}", bad)
    return _result(
        "teleported-rotations", n, bad, "angles match the reference"
    )


def check_byproduct_paths() -> CheckResult:
    """Force every repeat-until-success path of every teleported angle."""
    bad: list[str] = []
    one_word = [1 if q in LOGICAL_SUPPORT else 0 for q in range(7)]
    zero_word = [0] * 7
    n = 0
    for m in range(64):
        angle = BinaryFractionAngle(m)
        depth = angle.ladder_depth()
        ref = _rz_ref(angle.theta, _A, _B)
        for mode in ("noqed", "qed"):
            # five deterministic check bits precede each readout word
            prefix = [] if mode == "noqed" else [0] * 5
            for fails in range(depth + 1):
                n += 1
                label = f"{mode} m={m} fails={fails}"
                force = (prefix + one_word) * fails
                if fails < depth:
                    force += prefix + zero_word
                nq, ops = _teleport_circuit(m, mode)
                interp = _Interp(nq, force=force)
                interp.seed_state(_logical(_A, _B))
                try:
                    interp.run(ops)
                except _DiscardedRun:
                    bad.append(f"{label}: discarded")
                    continue
                if interp.force:
                    bad.append(f"{label}: {len(interp.force)} forced bits unused")
                    continue
                _conforms(interp, ref, label, bad)
    return _result("byproduct-paths", n, bad, "forced paths land on target")


# ---------------------------------------------------------------------------

def run_all(seed: int = 0) -> list[CheckResult]:
    """The full conformance suite, cheapest checks first."""
    return [
        check_fault_table(),
        check_encodings(),
        check_cliffords(),
        check_parity_flags(),
        check_corrections(seed),
        check_direct_rotations(),
        check_resource_states(),
        check_teleported_rotations(seed),
        check_byproduct_paths(),
    ]
