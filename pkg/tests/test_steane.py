import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qecqpe.circuit import (
    CircuitBuilder,
    Conditional,
    Discard,
    Measure,
    RepeatUntil,
    Reset,
    Unitary,
    count_resources,
    deserialize,
    serialize,
)
from qecqpe.statevector import StateVector
from qecqpe.steane import (
    CELLS,
    LOGICAL_SUPPORT,
    SYNDROME_COLUMNS,
    BinaryFractionAngle,
    SteaneBlock,
    decode_readout,
    encode_plus_ops,
    encode_zero_ops,
    encoder_ops,
    logical_cx_ops,
    logical_one_predicate,
    measure_block_ops,
    prepare_theta_ops,
    qec_ops,
    qed_ops,
    rotation_fault_table,
    rz_direct_ops,
    rz_teleport_ops,
    transversal_ops,
)

# ---------------------------------------------------------------------------
# Dense oracle machinery, independent of the package's simulation engines.

_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2),
}


def op_on(n, mapping):
    """Dense operator with mapping[q] on qubit q (little-endian)."""
    M = np.array([[1.0 + 0j]])
    for q in range(n):
        M = np.kron(mapping.get(q, _1Q["I"]), M)
    return M


def pauli_on(n, qubits, letters):
    return op_on(n, {q: _1Q[p] for q, p in zip(qubits, letters)})


def codespace_projector():
    P = np.eye(128, dtype=complex)
    for cell in CELLS:
        for letter in ("X", "Z"):
            S = pauli_on(7, cell, letter * 4)
            P = P @ (np.eye(128) + S) / 2.0
    return P


_P = codespace_projector()
_ZERO_L = _P[:, 0] / np.linalg.norm(_P[:, 0])
_ONE_L = pauli_on(7, LOGICAL_SUPPORT, "XXX") @ _ZERO_L


def logical_state(alpha, beta, n=7, offset=0):
    """alpha|0_L> + beta|1_L> on qubits offset..offset+6 of an n-qubit register."""
    vec = alpha * _ZERO_L + beta * _ONE_L
    vec = vec / np.linalg.norm(vec)
    if n == 7 and offset == 0:
        return vec.copy()
    full = np.zeros(2**n, dtype=complex)
    # embed: remaining qubits in |0>
    for idx in range(128):
        if vec[idx] != 0:
            full[idx << offset] = vec[idx]
    return full


def fidelity(a, b):
    return abs(np.vdot(a, b)) ** 2


class Discarded(Exception):
    pass


class Oracle:
    """Noiseless reference interpreter with outcome forcing.

    Measurements consume the ``force`` queue while it lasts (postselecting and
    recording the branch probability), then fall back to the likelier branch
    (``mode='greedy'``) or to Born sampling (``mode='random'``).
    """

    def __init__(self, num_qubits, force=(), mode="greedy", seed=0):
        self.n = num_qubits
        self.amps = np.zeros(2**num_qubits, dtype=complex)
        self.amps[0] = 1.0
        self.clbits = {}
        self.force = list(force)
        self.mode = mode
        self.rng = np.random.default_rng(seed)
        self.branch_probs = []

    def _prob_one(self, q):
        t = self.amps.reshape(-1, 2, 1 << q)
        return float(np.sum(np.abs(t[:, 1, :]) ** 2))

    def _collapse(self, q, bit, p_keep):
        t = self.amps.reshape(-1, 2, 1 << q)
        out = np.zeros_like(t)
        out[:, bit, :] = t[:, bit, :] / math.sqrt(p_keep)
        self.amps = out.reshape(-1)

    def _measure(self, q):
        p1 = self._prob_one(q)
        if self.force:
            bit = self.force.pop(0)
        elif self.mode == "greedy":
            bit = 1 if p1 > 0.5 else 0
        else:
            bit = 1 if self.rng.random() < p1 else 0
        p_keep = p1 if bit else 1.0 - p1
        assert p_keep > 1e-12, f"forced impossible outcome {bit} on qubit {q}"
        self.branch_probs.append(p_keep)
        self._collapse(q, bit, p_keep)
        return bit

    def run(self, ops):
        for ins in ops:
            if isinstance(ins, Unitary):
                sv = StateVector.__new__(StateVector)
                sv.num_qubits = self.n
                sv.amplitudes = self.amps
                sv.apply_unitary(ins.name, ins.qubits, ins.angle)
                self.amps = sv.amplitudes
            elif isinstance(ins, Measure):
                self.clbits[ins.clbit] = self._measure(ins.qubit)
            elif isinstance(ins, Reset):
                # never touches the force queue: gadget resets only ever hit
                # qubits already in a basis state
                p1 = self._prob_one(ins.qubit)
                if p1 > 1.0 - 1e-12:
                    self._collapse(ins.qubit, 1, p1)
                    self.amps = apply_pauli(self.amps, ins.qubit, "X")
                else:
                    assert p1 < 1e-12, f"reset on superposed qubit {ins.qubit}"
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
                        raise Discarded
            elif isinstance(ins, Discard):
                raise Discarded
            else:
                raise AssertionError(f"unexpected {ins!r}")
        return self


def apply_pauli(amps, q, p):
    """Apply a single-qubit Pauli without materializing the dense operator."""
    t = amps.reshape(-1, 2, 1 << q)
    if p == "Z":
        t = t.copy()
        t[:, 1, :] *= -1.0
    else:
        t = t[:, ::-1, :].copy()
        if p == "Y":
            t[:, 0, :] *= -1j
            t[:, 1, :] *= 1j
    return t.reshape(-1)


def data_part(o):
    """Conditional state of qubits 0..6 given the rest sits in a basis state."""
    rows = o.amps.reshape(-1, 128)
    weights = np.sum(np.abs(rows) ** 2, axis=1)
    top = int(np.argmax(weights))
    assert weights[top] == pytest.approx(1.0, abs=1e-9)
    return rows[top]


BLOCK = SteaneBlock(tuple(range(7)))


# ---------------------------------------------------------------------------
# Decoding

class TestDecoding:
    def test_columns_are_distinct_and_nonzero(self):
        cols = list(SYNDROME_COLUMNS.values())
        assert len(set(cols)) == 7
        assert all(c != (0, 0, 0) for c in cols)

    def test_column_matches_cell_membership(self):
        for q, col in SYNDROME_COLUMNS.items():
            assert col == tuple(1 if q in cell else 0 for cell in CELLS)

    def test_every_pattern_decodes_to_clean_word(self):
        for word in range(128):
            bits = [(word >> q) & 1 for q in range(7)]
            d = decode_readout(bits)
            assert d.syndrome == tuple(
                sum(bits[q] for q in cell) % 2 for cell in CELLS
            )
            fixed = list(bits)
            if d.correction is not None:
                fixed[d.correction] ^= 1
            assert all(
                sum(fixed[q] for q in cell) % 2 == 0 for cell in CELLS
            )
            assert d.logical == fixed[1] ^ fixed[3] ^ fixed[5]

    def test_predicate_matches_decoder_exhaustively(self):
        pred = logical_one_predicate(tuple(range(7)))
        assert len(pred.clauses) == 8
        for word in range(128):
            bits = [(word >> q) & 1 for q in range(7)]
            assert pred.evaluate(bits) == bool(decode_readout(bits).logical)

    def test_input_validation(self):
        with pytest.raises(ValueError, match="7"):
            decode_readout([0] * 6)
        with pytest.raises(ValueError, match="7"):
            logical_one_predicate([0, 1, 2])


# ---------------------------------------------------------------------------
# Angles

class TestBinaryFractionAngle:
    def test_grid_and_normalization(self):
        assert BinaryFractionAngle(65).m == 1
        assert BinaryFractionAngle(-1).m == 63
        assert BinaryFractionAngle(4).theta == pytest.approx(math.pi / 8)
        assert BinaryFractionAngle(60).theta == pytest.approx(-math.pi / 8)

    def test_clifford_set(self):
        cliffords = {m for m in range(64) if BinaryFractionAngle(m).is_clifford}
        assert cliffords == {0, 16, 32, 48}
        assert BinaryFractionAngle(16).quarter_turns == 1
        with pytest.raises(ValueError):
            BinaryFractionAngle(3).quarter_turns

    def test_ladder_depths(self):
        assert BinaryFractionAngle(6).ladder_depth() == 3
        for m in range(1, 64, 2):
            assert BinaryFractionAngle(m).ladder_depth() == 4
        assert BinaryFractionAngle(0).ladder_depth() == 0

    def test_from_angle_snaps(self):
        assert BinaryFractionAngle.from_angle(math.pi / 8).m == 4
        assert BinaryFractionAngle.from_angle(-math.pi / 8).m == 60
        assert BinaryFractionAngle.from_angle(-0.08924).m == 63
        assert BinaryFractionAngle.from_angle(0.08924).m == 1

    @given(st.integers(0, 63), st.integers(1, 5))
    def test_doubling_is_mod_64(self, m, k):
        a = BinaryFractionAngle(m)
        for _ in range(k):
            a = a.doubled()
        assert a.m == (m << k) % 64


# ---------------------------------------------------------------------------
# Preparation and Cliffords against the stabilizer oracle

class TestPreparation:
    def test_encoder_hits_codespace_zero(self):
        o = Oracle(7).run(encoder_ops(BLOCK))
        assert fidelity(o.amps, _ZERO_L) == pytest.approx(1.0, abs=1e-12)

    def test_ft_preparation_verifies_clean(self):
        b = CircuitBuilder(8)
        ops = encode_zero_ops(b, BLOCK, ft=True, verify=7)
        o = Oracle(8, force=[0]).run(ops)
        assert o.branch_probs[-1] == pytest.approx(1.0)   # flag never fires
        assert fidelity(o.amps, logical_state(1, 0, n=8)) == pytest.approx(
            1.0, abs=1e-12
        )

    def test_plus_state(self):
        b = CircuitBuilder(8)
        ops = encode_plus_ops(b, BLOCK, ft=True, verify=7)
        o = Oracle(8, force=[0]).run(ops)
        ref = logical_state(1, 1, n=8) / 1.0
        assert fidelity(o.amps, ref) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize(
        "name,action",
        [
            ("X", lambda a, b: (b, a)),
            ("Z", lambda a, b: (a, -b)),
            ("H", lambda a, b: ((a + b) / math.sqrt(2), (a - b) / math.sqrt(2))),
            ("S", lambda a, b: (a, 1j * b)),
            ("Sdg", lambda a, b: (a, -1j * b)),
        ],
    )
    def test_transversal_cliffords(self, name, action):
        alpha, beta = 0.6, 0.8j
        o = Oracle(7)
        o.amps = logical_state(alpha, beta)
        o.run(transversal_ops(BLOCK, name))
        a2, b2 = action(alpha, beta)
        assert fidelity(o.amps, a2 * _ZERO_L + b2 * _ONE_L) == pytest.approx(
            1.0, abs=1e-12
        )

    def test_logical_cx(self):
        other = SteaneBlock(tuple(range(7, 14)))
        o = Oracle(14)
        # control in |1_L>, target in |0_L>
        ctrl = logical_state(0, 1)
        o.amps = np.kron(np.zeros(128), np.zeros(128))
        o.amps = np.kron(logical_state(1, 0), ctrl)  # target high bits
        o.run(logical_cx_ops(BLOCK, other))
        want = np.kron(logical_state(0, 1), ctrl)
        assert fidelity(o.amps, want) == pytest.approx(1.0, abs=1e-12)

    def test_readout_decodes_prepared_one(self):
        b = CircuitBuilder(7)
        cs = b.new_clbits(7)
        o = Oracle(7, mode="random", seed=3)
        o.amps = logical_state(0, 1)
        o.run(measure_block_ops(BLOCK, cs))
        bits = [o.clbits[c] for c in cs]
        assert decode_readout(bits).logical == 1


# ---------------------------------------------------------------------------
# Rotations

def rz_logical_ref(theta, alpha, beta, n=7):
    return logical_state(
        alpha * np.exp(-0.5j * theta), beta * np.exp(0.5j * theta), n=n
    )


class TestRotations:
    def test_direct_rotation_is_logical_rz(self):
        alpha, beta = 0.48 + 0.1j, 0.86
        for theta in (0.3, -1.1, math.pi / 8):
            o = Oracle(7)
            o.amps = logical_state(alpha, beta)
            o.run(rz_direct_ops(BLOCK, theta))
            assert fidelity(
                o.amps, rz_logical_ref(theta, alpha, beta)
            ) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("m", range(64))
    def test_folded_preparation_all_angles(self, m):
        angle = BinaryFractionAngle(m)
        b = CircuitBuilder(7)
        ops = prepare_theta_ops(b, BLOCK, angle, mode="noqed")
        o = Oracle(7).run(ops)
        ref = rz_logical_ref(angle.theta, 1 / math.sqrt(2), 1 / math.sqrt(2))
        assert fidelity(o.amps, ref) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("m", [1, 6, 13, 32, 63])
    def test_checked_preparation(self, m):
        angle = BinaryFractionAngle(m)
        b = CircuitBuilder(10)
        ops = prepare_theta_ops(
            b, BLOCK, angle, mode="qed", verify=7, qed_ancillas=(8, 9)
        )
        o = Oracle(10, force=[0, 0, 0, 0, 0]).run(ops)   # verify + 4 checks
        ref = rz_logical_ref(angle.theta, 1 / math.sqrt(2), 1 / math.sqrt(2), n=10)
        assert fidelity(o.amps, ref) == pytest.approx(1.0, abs=1e-9)
        # every forced bit was the certain branch on the noiseless path
        assert all(p == pytest.approx(1.0) for p in o.branch_probs[-5:])

    @pytest.mark.parametrize("where", range(4))
    @pytest.mark.parametrize("pauli,flags", [("X", (1, 0)), ("Z", (0, 1)), ("Y", (1, 1))])
    def test_cell_check_flags_injected_errors(self, where, pauli, flags):
        cell = CELLS[0]
        b = CircuitBuilder(9)
        ops, bits = qed_ops(b, BLOCK, 0, (7, 8))
        o = Oracle(9)
        o.amps = logical_state(1 / math.sqrt(2), 1 / math.sqrt(2), n=9)
        o.amps = apply_pauli(o.amps, cell[where], pauli)
        o.run(ops)
        assert (o.clbits[bits[0]], o.clbits[bits[1]]) == flags

    def test_cell_check_clean_state_silent(self):
        for cell_index in (0, 1):
            b = CircuitBuilder(9)
            ops, bits = qed_ops(b, BLOCK, cell_index, (7, 8))
            o = Oracle(9)
            o.amps = logical_state(0.6, 0.8, n=9)
            o.run(ops)
            assert (o.clbits[bits[0]], o.clbits[bits[1]]) == (0, 0)
            assert all(p == pytest.approx(1.0) for p in o.branch_probs[-2:])


class TestTeleportedRotation:
    DATA = SteaneBlock(tuple(range(7)))
    RES = SteaneBlock(tuple(range(7, 14)))

    def _build(self, m):
        b = CircuitBuilder(14)
        ops = rz_teleport_ops(
            b, self.DATA, self.RES, BinaryFractionAngle(m), mode="noqed"
        )
        return ops

    def _data_state(self, alpha, beta, n=14):
        return np.kron(np.eye(1, 2**(n - 7), 0)[0], logical_state(alpha, beta))

    ONE_WORD = [1 if q in LOGICAL_SUPPORT else 0 for q in range(7)]

    @pytest.mark.parametrize("m", range(64))
    def test_success_branch_applies_rotation(self, m):
        alpha, beta = 0.72, 0.6 + 0.34j
        o = Oracle(14, force=[0] * 7)
        o.amps = self._data_state(alpha, beta)
        o.run(self._build(m))
        got = data_part(o)
        assert fidelity(
            got, rz_logical_ref(BinaryFractionAngle(m).theta, alpha, beta)
        ) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("m", [1, 6, 31, 63])
    def test_every_byproduct_path_lands_on_target(self, m):
        # Fail the first k teleports (decoded 1), succeed at level k+1 or run
        # into the Clifford tail; the composite must still be R_Z(theta).
        alpha, beta = 0.72, 0.6 + 0.34j
        depth = BinaryFractionAngle(m).ladder_depth()
        theta = BinaryFractionAngle(m).theta
        for fails in range(depth + 1):
            force = self.ONE_WORD * fails
            if fails < depth:
                force = force + [0] * 7
            o = Oracle(14, force=list(force))
            o.amps = self._data_state(alpha, beta)
            o.run(self._build(m))
            got = data_part(o)
            assert fidelity(
                got, rz_logical_ref(theta, alpha, beta)
            ) == pytest.approx(1.0, abs=1e-9), f"m={m} fails={fails}"

    def test_clifford_angles_use_no_teleport(self):
        for m in (0, 16, 32, 48):
            ops = self._build(m)
            assert all(isinstance(op, Unitary) for op in ops)
            assert all(len(op.qubits) == 1 for op in ops)

    def test_folded_preparation_gate_budget(self):
        b = CircuitBuilder(7)
        ops = prepare_theta_ops(b, BLOCK, BinaryFractionAngle(5), mode="noqed")
        two_q = sum(1 for op in ops if isinstance(op, Unitary) and len(op.qubits) == 2)
        assert two_q == 9


# ---------------------------------------------------------------------------
# Error correction round

class TestCorrectionRound:
    AUX = SteaneBlock(tuple(range(7, 14)))

    def _run(self, kind, error=None, seed=0):
        b = CircuitBuilder(15)
        ops = qec_ops(b, BLOCK, self.AUX, verify=14, kind=kind)
        o = Oracle(15, mode="random", seed=seed)
        alpha, beta = 0.6, 0.8
        o.amps = np.kron(np.eye(1, 2**8, 0)[0], logical_state(alpha, beta))
        if error is not None:
            q, p = error
            o.amps = apply_pauli(o.amps, q, p)
        o.run(ops)
        return fidelity(data_part(o), logical_state(alpha, beta))

    @pytest.mark.parametrize("q", range(7))
    def test_corrects_every_single_phase_error(self, q):
        for seed in (0, 1):
            assert self._run("x", error=(q, "Z"), seed=seed) == pytest.approx(
                1.0, abs=1e-9
            )

    @pytest.mark.parametrize("q", range(7))
    def test_corrects_every_single_flip_error(self, q):
        for seed in (0, 1):
            assert self._run("z", error=(q, "X"), seed=seed) == pytest.approx(
                1.0, abs=1e-9
            )

    def test_clean_state_untouched(self):
        for kind in ("x", "z"):
            assert self._run(kind, seed=2) == pytest.approx(1.0, abs=1e-9)

    def test_combined_round_fixes_y(self):
        assert self._run("xz", error=(3, "Y"), seed=5) == pytest.approx(
            1.0, abs=1e-9
        )


# ---------------------------------------------------------------------------
# Fault propagation table

class TestRotationFaultTable:
    def test_shape(self):
        rows = rotation_fault_table()
        assert len(rows) == 45
        for slot in (1, 2, 3):
            assert sum(1 for r in rows if r.slot == slot) == 15

    def _label_to_op(self, label):
        if label == "I":
            return np.eye(128, dtype=complex)
        out = np.eye(128, dtype=complex)
        for i in range(0, len(label), 2):
            p, q = label[i], int(label[i + 1])
            out = out @ pauli_on(7, (q,), p)
        return out

    def test_rows_match_dense_conjugation(self):
        # dense CX(4 -> 1)
        CX41 = np.zeros((128, 128), dtype=complex)
        for idx in range(128):
            CX41[idx ^ (((idx >> 4) & 1) << 1), idx] = 1.0
        zz01 = pauli_on(7, (0, 1), "ZZ")
        for row in rotation_fault_table():
            E = self._label_to_op(row.error)
            if row.slot in (1, 2):
                O = CX41 @ E @ CX41
            else:
                O = E
            want = self._label_to_op(row.propagated)
            overlap = abs(np.trace(want.conj().T @ O))
            assert overlap == pytest.approx(128.0), row
            if row.slot == 1:
                anti = np.linalg.norm(E @ zz01 + zz01 @ E) < 1e-12
                assert row.flips_angle == int(anti), row
            else:
                assert row.flips_angle == 0

    def test_syndrome_column_is_cell_parity(self):
        for row in rotation_fault_table():
            O = row.propagated
            zq = {int(O[i + 1]) for i in range(0, len(O), 2) if O != "I" and O[i] in "YZ"}
            xq = {int(O[i + 1]) for i in range(0, len(O), 2) if O != "I" and O[i] in "XY"}
            sx = [len(zq & set(CELLS[i])) % 2 for i in range(2)]
            sz = [len(xq & set(CELLS[i])) % 2 for i in range(2)]
            assert row.syndrome == f"{sx[0]}({sx[1]}){sz[0]}{sz[1]}", row

    def test_known_silent_rows(self):
        rows = {(r.slot, r.error): r for r in rotation_fault_table()}
        r = rows[(1, "Z4")]
        assert (r.propagated, r.flips_angle, r.syndrome) == ("Z4", 0, "0(1)00")
        r = rows[(3, "Z4")]
        assert (r.propagated, r.flips_angle, r.syndrome) == ("Z4", 0, "0(1)00")
        r = rows[(2, "Z0Z1")]
        assert (r.propagated, r.flips_angle, r.syndrome) == ("Z0Z1Z4", 0, "0(0)00")
        r = rows[(2, "X0X1")]
        assert (r.propagated, r.flips_angle, r.syndrome) == ("X0X1", 0, "0(0)01")

    def test_angle_flip_rows_are_the_x1_family(self):
        flipped = {
            r.error for r in rotation_fault_table() if r.flips_angle
        }
        assert flipped == {
            e for e in flipped
        } and all("X1" in e or "Y1" in e for e in flipped)
        assert len(flipped) == 8


# ---------------------------------------------------------------------------
# Integration: serialization and structure

class TestStructure:
    def test_teleport_circuit_round_trips(self):
        b = CircuitBuilder(23)
        data = SteaneBlock(tuple(range(7)))
        res = SteaneBlock(tuple(range(14, 21)))
        b.add(
            *rz_teleport_ops(
                b, data, res, BinaryFractionAngle(13),
                mode="qed", verify=21, qed_ancillas=(21, 22),
            )
        )
        circ = b.build()
        assert deserialize(serialize(circ)) == circ

    def test_qec_round_trips(self):
        b = CircuitBuilder(15)
        b.add(*qec_ops(b, BLOCK, SteaneBlock(tuple(range(7, 14))),
                       verify=14, kind="xz"))
        circ = b.build()
        assert deserialize(serialize(circ)) == circ

    def test_bad_blocks_rejected(self):
        with pytest.raises(ValueError):
            SteaneBlock((0, 1, 2, 3, 4, 5, 5))
        with pytest.raises(ValueError):
            SteaneBlock((0, 1, 2))
