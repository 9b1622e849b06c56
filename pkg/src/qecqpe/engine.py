"""Monte-Carlo trajectory execution of dynamic circuits under the noise model.

Two interchangeable state representations drive the same instruction walker:

* ``FactoredState`` keeps the global pure state as a product of disjoint
  tensor factors, merging factors on entangling gates and splitting on
  measurement.  The circuits built here interleave transversal couplings
  with measurements precisely so factors stay near two code blocks wide.
* ``StateVector`` (dense, fixed width) is the conformance reference.

Both consume identical RNG draw sequences for identical circuits — one
uniform per collapse, one per fault check plus one per fired fault, one per
nonzero-probability readout flip, one per stochastic memory event — so a
trajectory is reproducible bit-for-bit across engines and process counts.

Timing: ops are serialized (one schedule lane); each qubit carries an idle
clock that accrues whenever the qubit is not participating and is flushed
through the memory channel right before its next participation.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import kernels
from .circuit import (
    Circuit,
    Conditional,
    Discard,
    IdleBarrier,
    Instruction,
    Measure,
    RepeatUntil,
    Reset,
    ResourceCount,
    Unitary,
)
from .noise import NoiseModel, flip_readout, sample_gate_fault
from .statevector import SimulationError, StateVector, apply_gate

__all__ = [
    "FactoredState",
    "RunConfig",
    "TrajectoryResult",
    "insert_dd",
    "run_trajectory",
    "run_shots",
]

_BASIS = (
    np.array([1.0 + 0j, 0.0 + 0j]),
    np.array([0.0 + 0j, 1.0 + 0j]),
)


class _Factor:
    __slots__ = ("qubits", "amps")

    def __init__(self, qubits: list[int], amps: np.ndarray):
        self.qubits = qubits
        self.amps = amps


class FactoredState:
    """Product-of-factors pure state over ``num_qubits`` qubits.

    Within a factor, list position j of ``qubits`` is bit j of the flat
    amplitude index.  Factors merge lazily on two-qubit gates and split on
    measurement, so memory tracks the actual entanglement structure instead
    of the full register width.
    """

    def __init__(self, num_qubits: int, max_factor_qubits: int = 24):
        if num_qubits < 0:
            raise SimulationError(f"num_qubits={num_qubits} must be nonnegative")
        self.num_qubits = num_qubits
        self.max_factor_qubits = max_factor_qubits
        self._where: list[_Factor] = [
            _Factor([q], _BASIS[0].copy()) for q in range(num_qubits)
        ]

    # -- internals -----------------------------------------------------------

    def _merge(self, fa: _Factor, fb: _Factor) -> _Factor:
        size = len(fa.qubits) + len(fb.qubits)
        if size > self.max_factor_qubits:
            raise SimulationError(
                f"entanglement merge would need {size} qubits in one factor "
                f"(cap {self.max_factor_qubits})"
            )
        # kron puts the second operand in the low bits.
        merged = _Factor(fb.qubits + fa.qubits, np.kron(fa.amps, fb.amps))
        for q in merged.qubits:
            self._where[q] = merged
        return merged

    def _pos(self, q: int) -> tuple[_Factor, int]:
        if not 0 <= q < self.num_qubits:
            raise SimulationError(f"qubit {q} out of range [0, {self.num_qubits})")
        f = self._where[q]
        return f, f.qubits.index(q)

    # -- backend protocol ----------------------------------------------------

    def apply_unitary(self, name: str, qubits: Sequence[int],
                      angle: Optional[float] = None) -> None:
        qubits = tuple(qubits)
        if len(qubits) == 1:
            f, j = self._pos(qubits[0])
            apply_gate(f.amps, (j,), name, angle)
            return
        fa, _ = self._pos(qubits[0])
        fb, _ = self._pos(qubits[1])
        f = self._merge(fa, fb) if fa is not fb else fa
        positions = (f.qubits.index(qubits[0]), f.qubits.index(qubits[1]))
        apply_gate(f.amps, positions, name, angle)

    def apply_pauli(self, qubit: int, pauli: str) -> None:
        f, j = self._pos(qubit)
        if pauli == "X":
            kernels.apply_x(f.amps, j)
        elif pauli == "Z":
            kernels.apply_diag_1q(f.amps, j, 1.0 + 0j, -1.0 + 0j)
        elif pauli == "Y":
            apply_gate(f.amps, (j,), "Y", None)
        else:
            raise SimulationError(f"bad Pauli {pauli!r}")

    def prob_one(self, qubit: int) -> float:
        f, j = self._pos(qubit)
        return kernels.prob_one(f.amps, j)

    def measure(self, qubit: int, rng: np.random.Generator) -> int:
        f, j = self._pos(qubit)
        p1 = kernels.prob_one(f.amps, j)
        bit = 1 if rng.random() < p1 else 0
        p_keep = p1 if bit else 1.0 - p1
        if p_keep <= 0.0:
            raise SimulationError(
                f"measured zero-probability branch {bit} on qubit {qubit}"
            )
        if len(f.qubits) == 1:
            f.amps = _BASIS[bit].copy()
            return bit
        view = f.amps.reshape(-1, 2, 1 << j)
        f.amps = np.multiply(view[:, bit, :], 1.0 / math.sqrt(p_keep)).reshape(-1)
        f.qubits.pop(j)
        self._where[qubit] = _Factor([qubit], _BASIS[bit].copy())
        return bit

    def reset(self, qubit: int, rng: np.random.Generator) -> None:
        if self.measure(qubit, rng):
            self.apply_pauli(qubit, "X")

    def apply_phase(self, qubit: int, z: complex) -> None:
        """diag(1, z) on one qubit (settles a deferred idle phase)."""
        f, j = self._pos(qubit)
        kernels.apply_diag_1q(f.amps, j, 1.0 + 0j, z)

    def apply_x_layer(self, qubits: Sequence[int]) -> None:
        """X on several distinct qubits, one pass per touched factor."""
        masks: dict[int, tuple[_Factor, int]] = {}
        for q in qubits:
            f, j = self._pos(q)
            prev = masks.get(id(f))
            masks[id(f)] = (f, (prev[1] if prev else 0) | (1 << j))
        for f, mask in masks.values():
            kernels.apply_x_mask(f.amps, mask)

    def _joint(self, qa: int, qb: int) -> _Factor:
        fa, _ = self._pos(qa)
        fb, _ = self._pos(qb)
        return self._merge(fa, fb) if fa is not fb else fa

    def measure_after_cx(self, qc: int, qt: int, z_t: complex,
                         rng: np.random.Generator) -> int:
        """CX(qc -> qt) then computational readout of qt, fused.

        ``z_t`` is a deferred diag(1, z) on qt ordered before the CX.  The
        collapse extracts qt from its factor in the same pass.
        """
        f = self._joint(qc, qt)
        jc, jt = f.qubits.index(qc), f.qubits.index(qt)
        p1 = kernels.zmeas_prob(f.amps, jc, jt)
        bit = 1 if rng.random() < p1 else 0
        p_keep = p1 if bit else 1.0 - p1
        if p_keep <= 0.0:
            raise SimulationError(
                f"measured zero-probability branch {bit} on qubit {qt}"
            )
        f.amps = kernels.zmeas_collapse(
            f.amps, jc, jt, z_t, bit, 1.0 / math.sqrt(p_keep)
        )
        f.qubits.pop(jt)
        self._where[qt] = _Factor([qt], _BASIS[bit].copy())
        return bit

    def measure_x_after_cx(self, qc: int, qt: int, z_c: complex, z_t: complex,
                           rng: np.random.Generator) -> int:
        """CX(qc -> qt), H(qc), then readout of qc, fused.

        Deferred phases: diag(1, z_c) on qc and diag(1, z_t) on qt, both
        ordered before the CX.
        """
        f = self._joint(qc, qt)
        jc, jt = f.qubits.index(qc), f.qubits.index(qt)
        p1 = 1.0 - kernels.xmeas_prob(f.amps, jc, jt, z_c, z_t)
        bit = 1 if rng.random() < p1 else 0
        p_keep = p1 if bit else 1.0 - p1
        if p_keep <= 0.0:
            raise SimulationError(
                f"measured zero-probability branch {bit} on qubit {qc}"
            )
        f.amps = kernels.xmeas_collapse(
            f.amps, jc, jt, z_c, z_t, bit, 1.0 / math.sqrt(p_keep)
        )
        f.qubits.pop(jc)
        self._where[qc] = _Factor([qc], _BASIS[bit].copy())
        return bit

    # -- diagnostics ---------------------------------------------------------

    def factor_sizes(self) -> list[int]:
        return sorted(len(f.qubits) for f in {id(f): f for f in self._where}.values())

    def norm_sq(self) -> float:
        out = 1.0
        for f in {id(f): f for f in self._where}.values():
            out *= kernels.norm_sq(f.amps)
        return out

    def to_dense(self) -> StateVector:
        """Dense copy in the global little-endian convention (for tests)."""
        acc = np.array([1.0 + 0j])
        bit_order: list[int] = []
        for f in {id(f): f for f in self._where}.values():
            acc = np.kron(f.amps, acc)
            bit_order = bit_order + f.qubits
        n = self.num_qubits
        t = acc.reshape((2,) * n) if n else acc
        if n:
            # axis a of t holds qubit bit_order[n - 1 - a]; we want qubit
            # n - 1 - a at axis a.
            axis_of_qubit = {q: n - 1 - b for b, q in enumerate(bit_order)}
            perm = [axis_of_qubit[n - 1 - a] for a in range(n)]
            t = np.transpose(t, perm)
        sv = StateVector(n)
        sv.amplitudes = np.ascontiguousarray(t.reshape(-1))
        return sv


# ---------------------------------------------------------------------------
# Trajectory walker

@dataclass(frozen=True)
class RunConfig:
    n_shots: int
    master_seed: int = 0
    engine: str = "factored"       # factored | dense
    processes: int = 1
    max_qubits: int = 24


@dataclass
class TrajectoryResult:
    clbits: np.ndarray             # int8 per classical bit (0 if never written)
    discarded: bool
    resources: ResourceCount       # observed along this trajectory
    idle_time: np.ndarray          # per-qubit accumulated idle, seconds
    makespan: float                # serialized schedule length, seconds
    final_state: object = None     # backend state, only kept on request


class _DiscardShot(Exception):
    pass


def _terminal_suffix_len(circuit: Circuit) -> int:
    n = 0
    for ins in reversed(circuit.instructions):
        if not isinstance(ins, Measure):
            break
        n += 1
    return n


# Idle-phase bookkeeping: a qubit's accrued memory noise is held as a deferred
# diag(1, z) factor and only written into the state when a non-commuting gate
# forces it.  Z/S/T/RZ/RZZ and the control side of CX commute and retain the
# factor; X and Y conjugate it (X diag(1,z) = z diag(1,conj z) X, global phase
# dropped); H/RX/RY/RXX and the target side of CX force a settle.  A
# computational readout discards it — a diagonal just before collapse is
# unobservable.  Every alternative is exactly equal to flushing eagerly, but
# skips almost all of the wide-factor phase passes.
_RETAIN_1Q = frozenset({"Z", "S", "Sdg", "T", "Tdg", "RZ"})
_FOLD_1Q = frozenset({"X", "Y"})


class _Walker:
    def __init__(self, circuit: Circuit, model: NoiseModel, state, rng):
        self.circuit = circuit
        self.model = model
        self.state = state
        self.rng = rng
        self.clbits = np.zeros(circuit.num_clbits, dtype=np.int8)
        nq = circuit.num_qubits
        self.busy_until = [0.0] * nq   # when each qubit's last op finished
        self.busy_time = [0.0] * nq
        self.pending = [complex(1.0)] * nq   # deferred diag(1, z) per qubit
        self.t = 0.0
        self.two_q = 0
        self.measures = 0
        self.resets = 0
        self.touched: set[int] = set()
        self.level: dict[int, int] = {}
        d = model.durations
        self.d1 = d["unitary_1q"]
        self.d2 = d["unitary_2q"]
        self.d_meas = d["measure"]
        self.d_reset = d["reset"]

    def run(self) -> TrajectoryResult:
        discarded = False
        try:
            self._exec(self.circuit.instructions)
        except _DiscardShot:
            discarded = True
        makespan = self.t
        idle = np.array(
            [makespan - self.busy_time[q] for q in range(self.circuit.num_qubits)]
        )
        mid = self.measures
        if not discarded:
            mid -= _terminal_suffix_len(self.circuit)
        resources = ResourceCount(
            two_qubit_gates=self.two_q,
            mid_circuit_measurements=max(mid, 0),
            resets=self.resets,
            max_qubits_live=len(self.touched),
            depth=max(self.level.values(), default=0),
        )
        return TrajectoryResult(self.clbits, discarded, resources, idle, makespan)

    # Accrue a qubit's idle window into its deferred phase.  Draw discipline
    # matches noise.memory_flush: the stochastic-memory uniform is consumed
    # whenever g != 0 and the window is positive.
    def _flush(self, q: int) -> None:
        idle = self.t - self.busy_until[q]
        if idle > 0.0:
            m = self.model
            if m.f != 0.0:
                a = m.f * idle
                self.pending[q] *= complex(math.cos(a), math.sin(a))
            if m.g != 0.0:
                pz = m.g * idle
                if pz > 1.0:
                    warnings.warn(
                        f"stochastic memory probability g*t = {pz:.3g} "
                        "clamped to 1",
                        RuntimeWarning,
                        stacklevel=2,
                    )
                    pz = 1.0
                if self.rng.random() < pz:
                    self.pending[q] = -self.pending[q]
            self.busy_until[q] = self.t

    def _settle(self, q: int) -> None:
        z = self.pending[q]
        if z != 1.0:
            self.state.apply_phase(q, z)
            self.pending[q] = complex(1.0)

    def _fault(self, q: int, pauli: str) -> None:
        if pauli == "Z":
            self.pending[q] = -self.pending[q]
        else:
            self.pending[q] = self.pending[q].conjugate()
            self.state.apply_pauli(q, pauli)

    def _occupy(self, qubits: Iterable[int], dt: float) -> None:
        end = self.t + dt
        for q in qubits:
            self.busy_until[q] = end
            self.busy_time[q] += dt
        self.t = end

    def _bump_level(self, qubits: Sequence[int]) -> None:
        self.touched.update(qubits)
        lvl = 1 + max((self.level.get(q, 0) for q in qubits), default=0)
        for q in qubits:
            self.level[q] = lvl

    def _do_unitary(self, ins: Unitary) -> None:
        name, qs = ins.name, ins.qubits
        for q in qs:
            self._flush(q)
        if len(qs) == 1:
            q = qs[0]
            if name in _FOLD_1Q:
                self.pending[q] = self.pending[q].conjugate()
            elif name not in _RETAIN_1Q:
                self._settle(q)
        elif name == "CX":
            self._settle(qs[1])
        elif name != "RZZ":
            self._settle(qs[0])
            self._settle(qs[1])
        self.state.apply_unitary(name, qs, ins.angle)
        fault = sample_gate_fault(len(qs), self.model, self.rng)
        if fault is not None:
            for q, p in zip(qs, fault):
                if p != "I":
                    self._fault(q, p)
        if len(qs) == 2:
            self.two_q += 1
            self._occupy(qs, self.d2)
        else:
            self._occupy(qs, self.d1)
        self._bump_level(qs)

    def _do_measure(self, ins: Measure) -> None:
        q = ins.qubit
        self._flush(q)
        self.pending[q] = complex(1.0)   # diagonal before readout: unobservable
        bit = self.state.measure(q, self.rng)
        self._record_measure(q, ins.clbit, bit)

    def _record_measure(self, q: int, clbit: int, bit: int) -> None:
        self.clbits[clbit] = flip_readout(bit, self.model, self.rng)
        self.measures += 1
        self._occupy((q,), self.d_meas)
        self._bump_level((q,))

    # [CX(a -> b); Measure b] with no other op between: one fused pass on the
    # joint factor.  The deferred phase on b folds through as a read factor;
    # the phase on a commutes with the control side and stays deferred.
    def _fused_zmeas(self, cx: Unitary, meas: Measure) -> None:
        qc, qt = cx.qubits
        self._flush(qc)
        self._flush(qt)
        fault = sample_gate_fault(2, self.model, self.rng)
        self.two_q += 1
        self._occupy((qc, qt), self.d2)
        self._bump_level((qc, qt))
        if fault is None:
            z_t = self.pending[qt]
            self.pending[qt] = complex(1.0)
            bit = self.state.measure_after_cx(qc, qt, z_t, self.rng)
        else:
            self._settle(qt)
            self.state.apply_unitary("CX", (qc, qt), None)
            for q, p in zip((qc, qt), fault):
                if p != "I":
                    self._fault(q, p)
            self.pending[qt] = complex(1.0)
            bit = self.state.measure(qt, self.rng)
        self._record_measure(qt, meas.clbit, bit)

    # [CX(a -> b); H a; Measure a]: X-basis syndrome readout, fused likewise.
    def _fused_xmeas(self, cx: Unitary, meas: Measure) -> None:
        qc, qt = cx.qubits
        self._flush(qc)
        self._flush(qt)
        fault2 = sample_gate_fault(2, self.model, self.rng)
        self.two_q += 1
        self._occupy((qc, qt), self.d2)
        self._bump_level((qc, qt))
        if fault2 is not None:
            self._settle(qt)
            self.state.apply_unitary("CX", (qc, qt), None)
            for q, p in zip((qc, qt), fault2):
                if p != "I":
                    self._fault(q, p)
        fault1 = sample_gate_fault(1, self.model, self.rng)
        if fault2 is None and fault1 is None:
            z_c, z_t = self.pending[qc], self.pending[qt]
            self.pending[qc] = self.pending[qt] = complex(1.0)
            self._occupy((qc,), self.d1)
            self._bump_level((qc,))
            bit = self.state.measure_x_after_cx(qc, qt, z_c, z_t, self.rng)
        else:
            if fault2 is None:
                self._settle(qt)
                self.state.apply_unitary("CX", (qc, qt), None)
            self._settle(qc)
            self.state.apply_unitary("H", (qc,), None)
            if fault1 is not None and fault1[0] != "I":
                self._fault(qc, fault1[0])
            self._occupy((qc,), self.d1)
            self._bump_level((qc,))
            self.pending[qc] = complex(1.0)
            bit = self.state.measure(qc, self.rng)
        self._record_measure(qc, meas.clbit, bit)

    # A run of X gates on distinct qubits (dynamical-decoupling layers):
    # deferred phases fold for free and the flips land in one pass per factor.
    def _x_run(self, run: list[Unitary]) -> None:
        qs = [u.qubits[0] for u in run]
        for q in qs:
            self._flush(q)
        fired: list[tuple[int, str]] = []
        for q in qs:
            self.pending[q] = self.pending[q].conjugate()
            fault = sample_gate_fault(1, self.model, self.rng)
            if fault is not None and fault[0] != "I":
                fired.append((q, fault[0]))
        self.state.apply_x_layer(qs)
        for q, p in fired:
            self._fault(q, p)
        for q in qs:
            self._occupy((q,), self.d1)
            self._bump_level((q,))

    def _exec(self, instructions: Sequence[Instruction]) -> None:
        i = 0
        n = len(instructions)
        while i < n:
            ins = instructions[i]
            if isinstance(ins, Unitary):
                if ins.name == "CX" and i + 1 < n:
                    nxt = instructions[i + 1]
                    if isinstance(nxt, Measure) and nxt.qubit == ins.qubits[1]:
                        self._fused_zmeas(ins, nxt)
                        i += 2
                        continue
                    if (
                        isinstance(nxt, Unitary)
                        and nxt.name == "H"
                        and nxt.qubits[0] == ins.qubits[0]
                        and i + 2 < n
                    ):
                        m2 = instructions[i + 2]
                        if isinstance(m2, Measure) and m2.qubit == ins.qubits[0]:
                            self._fused_xmeas(ins, m2)
                            i += 3
                            continue
                elif ins.name == "X":
                    run = [ins]
                    seen = {ins.qubits[0]}
                    j = i + 1
                    while j < n:
                        nxt = instructions[j]
                        if (
                            isinstance(nxt, Unitary)
                            and nxt.name == "X"
                            and nxt.qubits[0] not in seen
                        ):
                            run.append(nxt)
                            seen.add(nxt.qubits[0])
                            j += 1
                        else:
                            break
                    if len(run) > 1:
                        self._x_run(run)
                        i = j
                        continue
                self._do_unitary(ins)
            elif isinstance(ins, Measure):
                self._do_measure(ins)
            elif isinstance(ins, Reset):
                q = ins.qubit
                self._flush(q)
                self.pending[q] = complex(1.0)
                self.state.reset(q, self.rng)
                if self.model.p_init > 0.0 and self.rng.random() < self.model.p_init:
                    self.state.apply_pauli(q, "X")
                self.resets += 1
                self._occupy((q,), self.d_reset)
                self._bump_level((q,))
            elif isinstance(ins, Conditional):
                if ins.guard.evaluate(self.clbits):
                    self._exec(ins.body)
            elif isinstance(ins, RepeatUntil):
                for _ in range(ins.max_iters):
                    self._exec(ins.body)
                    if ins.condition().evaluate(self.clbits):
                        break
                else:
                    if ins.on_exhaust == "discard":
                        raise _DiscardShot
            elif isinstance(ins, IdleBarrier):
                dt = ins.duration
                if dt is None:
                    dt = self.model.durations.get(ins.label, 0.0)
                self.t += dt
            elif isinstance(ins, Discard):
                raise _DiscardShot
            else:  # pragma: no cover - defensive
                raise SimulationError(f"unknown instruction {ins!r}")
            i += 1


# ---------------------------------------------------------------------------
# Dynamical decoupling insertion

def _ins_profile(ins, durations) -> tuple[tuple[int, ...], float]:
    """(touched qubits, duration) under the serialized schedule."""
    if isinstance(ins, Unitary):
        return ins.qubits, (
            durations["unitary_2q"] if len(ins.qubits) == 2
            else durations["unitary_1q"]
        )
    if isinstance(ins, Measure):
        return (ins.qubit,), durations["measure"]
    if isinstance(ins, Reset):
        return (ins.qubit,), durations["reset"]
    if isinstance(ins, IdleBarrier):
        dt = ins.duration
        if dt is None:
            dt = durations.get(ins.label, 0.0)
        return (), dt
    raise SimulationError(f"unschedulable instruction {ins!r}")


def _dd_segment(seg: list, durations, threshold: float) -> list:
    """Echo every idle window longer than ``threshold`` inside one
    straight-line stretch: an X at the boundary nearest the window midpoint
    and a second X right before the closing touch.  The pair is a logical
    no-op, so insertion never changes noiseless behavior."""
    times: list[tuple[float, float]] = []
    profile = [_ins_profile(ins, durations) for ins in seg]
    t = 0.0
    for _, dur in profile:
        times.append((t, t + dur))
        t += dur

    last_end: dict[int, float] = {}
    inserts: dict[int, list] = {}          # boundary idx -> X gates before seg[idx]
    split_marks: dict[int, list] = {}      # barrier idx -> [(offset, X gate)]
    for idx, (qs, _) in enumerate(profile):
        start = times[idx][0]
        for q in qs:
            opened = last_end.get(q)
            if opened is not None and start - opened > threshold:
                mid = 0.5 * (opened + start)
                best = None   # (distance, "boundary", k) | (0, "split", (j, off))
                k = idx - 1
                while k >= 1 and times[k][0] > opened:
                    d = abs(times[k][0] - mid)
                    if best is None or d < best[0]:
                        best = (d, "boundary", k)
                    k -= 1
                j = idx - 1
                while j >= 0 and times[j][1] > opened:
                    if isinstance(seg[j], IdleBarrier):
                        s, e = times[j]
                        if s < mid < e:
                            best = (0.0, "split", (j, mid - s))
                            break
                    j -= 1
                if best is not None:
                    if best[1] == "split":
                        j, off = best[2]
                        split_marks.setdefault(j, []).append(
                            (off, Unitary("X", (q,)))
                        )
                    else:
                        inserts.setdefault(best[2], []).append(Unitary("X", (q,)))
                    inserts.setdefault(idx, []).append(Unitary("X", (q,)))
            last_end[q] = times[idx][1]

    out: list = []
    for idx, ins in enumerate(seg):
        out.extend(inserts.get(idx, ()))
        if idx in split_marks:
            dur_total = profile[idx][1]
            marks = sorted(split_marks[idx], key=lambda p: p[0])
            pos = 0.0
            for off, xg in marks:
                if off > pos:
                    out.append(IdleBarrier(ins.label, off - pos))
                    pos = off
                out.append(xg)
            if dur_total > pos:
                out.append(IdleBarrier(ins.label, dur_total - pos))
        else:
            out.append(ins)
    return out


def _dd_list(instructions, durations, threshold: float) -> list:
    out: list = []
    seg: list = []
    for ins in instructions:
        if isinstance(ins, (Conditional, RepeatUntil, Discard)):
            out.extend(_dd_segment(seg, durations, threshold))
            seg = []
            if isinstance(ins, Conditional):
                out.append(
                    Conditional(
                        ins.guard, tuple(_dd_list(ins.body, durations, threshold))
                    )
                )
            elif isinstance(ins, RepeatUntil):
                out.append(
                    RepeatUntil(
                        tuple(_dd_list(ins.body, durations, threshold)),
                        max_iters=ins.max_iters,
                        clbit=ins.clbit,
                        target=ins.target,
                        until=ins.until,
                        on_exhaust=ins.on_exhaust,
                    )
                )
            else:
                out.append(ins)
        else:
            seg.append(ins)
    out.extend(_dd_segment(seg, durations, threshold))
    return out


def insert_dd(
    circuit: Circuit,
    durations: Optional[dict] = None,
    threshold: Optional[float] = None,
) -> Circuit:
    """Insert echo pairs on every idle window longer than ``threshold``.

    Windows are gaps between two touches of the same qubit within one
    straight-line stretch; stretches end at control flow (whose duration is
    data-dependent) and trailing idle is left alone.  ``threshold`` defaults
    to the measurement duration — the shortest window worth echoing.
    Explicit idle barriers are split in two when the midpoint lands inside
    one.
    """
    if durations is None:
        from .noise import DEFAULT_DURATIONS

        durations = dict(DEFAULT_DURATIONS)
    if threshold is None:
        threshold = durations["measure"]
    return Circuit(
        num_qubits=circuit.num_qubits,
        num_clbits=circuit.num_clbits,
        instructions=tuple(_dd_list(circuit.instructions, durations, threshold)),
        metadata=circuit.metadata,
    )


def _make_state(engine: str, num_qubits: int, max_qubits: int):
    if engine == "factored":
        return FactoredState(num_qubits, max_factor_qubits=max_qubits)
    if engine == "dense":
        return StateVector(num_qubits, max_qubits=max_qubits)
    raise ValueError(f"unknown engine {engine!r} (want factored|dense)")


def shot_rng(master_seed: int, shot_index: int) -> np.random.Generator:
    """Per-shot generator; independent of how shots are batched across workers."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(shot_index,))
    return np.random.Generator(np.random.PCG64(seq))


def run_trajectory(
    circuit: Circuit,
    model: NoiseModel,
    rng: Union[int, np.random.Generator],
    engine: str = "factored",
    max_qubits: int = 24,
    keep_state: bool = False,
) -> TrajectoryResult:
    """Execute one shot and return its record."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    state = _make_state(engine, circuit.num_qubits, max_qubits)
    walker = _Walker(circuit, model, state, rng)
    result = walker.run()
    if keep_state:
        result.final_state = walker.state
    return result


def _run_span(args) -> list[TrajectoryResult]:
    circuit, model, config, lo, hi = args
    return [
        run_trajectory(
            circuit, model, shot_rng(config.master_seed, i),
            engine=config.engine, max_qubits=config.max_qubits,
        )
        for i in range(lo, hi)
    ]


def run_shots(
    circuit: Circuit, model: NoiseModel, config: RunConfig
) -> list[TrajectoryResult]:
    """Run ``config.n_shots`` independent trajectories.

    Results are identical for any ``processes`` count: shot i always uses the
    generator spawned from (master_seed, i).
    """
    n = config.n_shots
    if config.processes <= 1 or n < 2:
        return _run_span((circuit, model, config, 0, n))
    workers = min(config.processes, n)
    step = -(-n // workers)
    spans = [
        (circuit, model, config, lo, min(lo + step, n)) for lo in range(0, n, step)
    ]
    out: list[TrajectoryResult] = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for chunk in pool.map(_run_span, spans):
            out.extend(chunk)
    return out
