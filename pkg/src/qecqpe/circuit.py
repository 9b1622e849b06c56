"""Instruction-level IR for dynamic quantum circuits.

Circuits are flat, ordered instruction lists over ``num_qubits`` qubits and
``num_clbits`` classical bits.  Mid-circuit measurement, classically guarded
blocks, bounded repeat-until-success loops and shot-discard markers are first
class, which is enough to express every gadget this package builds (verified
encoders, syndrome-conditioned corrections, teleportation ladders).

Guards are predicates in disjunctive normal form over parity tests: a clause
is a conjunction of ``xor(bits) == value`` checks, and a predicate succeeds if
any clause does.  A single-clause predicate is the common case (syndrome
matching); the multi-clause form is required exactly once, for the decoded
logical readout bit, which is not an affine function of the raw bits.

Circuits are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, Optional, Union

__all__ = [
    "CircuitError",
    "ParseError",
    "ParityTest",
    "Predicate",
    "Unitary",
    "Measure",
    "Reset",
    "Conditional",
    "RepeatUntil",
    "Discard",
    "IdleBarrier",
    "Instruction",
    "Circuit",
    "CircuitBuilder",
    "ResourceCount",
    "append",
    "count_resources",
    "serialize",
    "deserialize",
    "GATE_ARITY",
    "ANGLE_GATES",
]


class CircuitError(ValueError):
    """Raised when a circuit or instruction violates a structural invariant."""


class ParseError(ValueError):
    """Raised on malformed circuit text; carries 1-based line and column."""

    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


# Gate set: name -> arity.  Angle-parameterized gates take one angle in radians;
# rotation conventions are fixed in the statevector module (R_Z(a) = e^{-iaZ/2},
# R_ZZ(a) = e^{-iaZZ/2}, likewise R_XX).
GATE_ARITY: Mapping[str, int] = {
    "X": 1, "Y": 1, "Z": 1, "H": 1, "S": 1, "Sdg": 1, "T": 1, "Tdg": 1,
    "RX": 1, "RY": 1, "RZ": 1,
    "CX": 2, "RZZ": 2, "RXX": 2,
}
ANGLE_GATES = frozenset({"RX", "RY", "RZ", "RZZ", "RXX"})

_GATE_BY_LOWER = {name.lower(): name for name in GATE_ARITY}


@dataclass(frozen=True, slots=True)
class ParityTest:
    """xor of the named classical bits compared against a constant."""

    bits: tuple[int, ...]
    value: int

    def __post_init__(self) -> None:
        if not self.bits:
            raise CircuitError("parity test needs at least one bit")
        if len(set(self.bits)) != len(self.bits):
            raise CircuitError(f"duplicate bits in parity test: {self.bits}")
        if self.value not in (0, 1):
            raise CircuitError(f"parity test value must be 0 or 1, got {self.value}")

    def evaluate(self, clbits) -> bool:
        acc = 0
        for b in self.bits:
            acc ^= int(clbits[b])
        return acc == self.value


@dataclass(frozen=True, slots=True)
class Predicate:
    """DNF over parity tests: any clause true, where a clause is all-tests-true."""

    clauses: tuple[tuple[ParityTest, ...], ...]

    def __post_init__(self) -> None:
        if not self.clauses or any(not c for c in self.clauses):
            raise CircuitError("predicate needs at least one non-empty clause")

    @staticmethod
    def bit_equals(bit: int, value: int) -> "Predicate":
        return Predicate(((ParityTest((bit,), value),),))

    @staticmethod
    def all_of(*tests: ParityTest) -> "Predicate":
        return Predicate((tuple(tests),))

    @staticmethod
    def any_clause(clauses: Iterable[Iterable[ParityTest]]) -> "Predicate":
        return Predicate(tuple(tuple(c) for c in clauses))

    def bits_read(self) -> frozenset[int]:
        return frozenset(b for clause in self.clauses for t in clause for b in t.bits)

    def evaluate(self, clbits) -> bool:
        return any(all(t.evaluate(clbits) for t in clause) for clause in self.clauses)


@dataclass(frozen=True, slots=True)
class Unitary:
    name: str
    qubits: tuple[int, ...]
    angle: Optional[float] = None

    def __post_init__(self) -> None:
        if self.name not in GATE_ARITY:
            raise CircuitError(f"unknown gate {self.name!r}")
        if len(self.qubits) != GATE_ARITY[self.name]:
            raise CircuitError(
                f"{self.name} takes {GATE_ARITY[self.name]} qubit(s), got {self.qubits}"
            )
        if len(set(self.qubits)) != len(self.qubits):
            raise CircuitError(f"duplicate qubit indices in {self.name}{self.qubits}")
        if self.name in ANGLE_GATES:
            if self.angle is None or not _finite(self.angle):
                raise CircuitError(f"{self.name} needs a finite angle, got {self.angle}")
        elif self.angle is not None:
            raise CircuitError(f"{self.name} takes no angle")


@dataclass(frozen=True, slots=True)
class Measure:
    qubit: int
    clbit: int


@dataclass(frozen=True, slots=True)
class Reset:
    qubit: int


@dataclass(frozen=True, slots=True)
class Conditional:
    guard: Predicate
    body: tuple["Instruction", ...]


@dataclass(frozen=True, slots=True)
class RepeatUntil:
    """Execute ``body``, then test the success condition; loop while it fails.

    The condition is either ``clbit == target`` or an arbitrary ``until``
    predicate (exactly one of the two forms must be given).  After
    ``max_iters`` failed attempts the shot is discarded (``on_exhaust ==
    "discard"``) or execution falls through (``"continue"``).
    """

    body: tuple["Instruction", ...]
    max_iters: int = 5
    clbit: Optional[int] = None
    target: Optional[int] = None
    until: Optional[Predicate] = None
    on_exhaust: str = "discard"

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise CircuitError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.on_exhaust not in ("discard", "continue"):
            raise CircuitError(f"on_exhaust must be discard|continue, got {self.on_exhaust!r}")
        has_bit = self.clbit is not None
        if has_bit == (self.until is not None):
            raise CircuitError("exactly one of (clbit, target) or until must be set")
        if has_bit and self.target not in (0, 1):
            raise CircuitError(f"target must be 0 or 1, got {self.target}")

    def condition(self) -> Predicate:
        if self.until is not None:
            return self.until
        return Predicate.bit_equals(self.clbit, self.target)


@dataclass(frozen=True, slots=True)
class Discard:
    pass


@dataclass(frozen=True, slots=True)
class IdleBarrier:
    """Deliberate idle window.  Duration comes from the noise-model duration
    table under ``label`` unless given explicitly here (seconds)."""

    label: str = "idle"
    duration: Optional[float] = None


Instruction = Union[Unitary, Measure, Reset, Conditional, RepeatUntil, Discard, IdleBarrier]


def _finite(x: float) -> bool:
    return x == x and x not in (float("inf"), float("-inf"))


# ---------------------------------------------------------------------------
# Circuit container + validation

@dataclass(frozen=True)
class Circuit:
    num_qubits: int
    num_clbits: int
    instructions: tuple[Instruction, ...] = ()
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.num_qubits < 0 or self.num_clbits < 0:
            raise CircuitError("register sizes must be nonnegative")
        object.__setattr__(self, "instructions", tuple(self.instructions))
        object.__setattr__(self, "metadata", dict(self.metadata))
        _validate(self.instructions, self.num_qubits, self.num_clbits)

    def __len__(self) -> int:
        return len(self.instructions)

    def __iter__(self) -> Iterator[Instruction]:
        return iter(self.instructions)


def append(circuit: Circuit, instruction: Instruction) -> Circuit:
    """Return a new circuit with ``instruction`` appended (re-validating)."""
    return replace(circuit, instructions=circuit.instructions + (instruction,))


class CircuitBuilder:
    """Mutable accumulation helper; ``build()`` validates once at the end.

    Also hands out fresh classical bits so gadget builders never collide.
    """

    def __init__(self, num_qubits: int, metadata: Optional[Mapping[str, object]] = None):
        self.num_qubits = num_qubits
        self._instructions: list[Instruction] = []
        self._next_clbit = 0
        self.metadata = dict(metadata or {})

    def add(self, *instructions: Instruction) -> "CircuitBuilder":
        self._instructions.extend(instructions)
        return self

    def extend(self, instructions: Iterable[Instruction]) -> "CircuitBuilder":
        self._instructions.extend(instructions)
        return self

    def new_clbit(self) -> int:
        c = self._next_clbit
        self._next_clbit += 1
        return c

    def new_clbits(self, n: int) -> list[int]:
        return [self.new_clbit() for _ in range(n)]

    def build(self) -> Circuit:
        return Circuit(
            num_qubits=self.num_qubits,
            num_clbits=self._next_clbit,
            instructions=tuple(self._instructions),
            metadata=self.metadata,
        )


def _validate(instructions: tuple[Instruction, ...], nq: int, nc: int) -> None:
    # Flow-sensitive pass: qubit/clbit bounds everywhere, and every guard bit
    # must have been written on every path that can reach the read.
    def q_ok(q: int) -> None:
        if not 0 <= q < nq:
            raise CircuitError(f"qubit index {q} out of range [0, {nq})")

    def c_ok(c: int) -> None:
        if not 0 <= c < nc:
            raise CircuitError(f"classical bit {c} out of range [0, {nc})")

    def need_written(pred: Predicate, written: set[int]) -> None:
        for b in pred.bits_read():
            c_ok(b)
            if b not in written:
                raise CircuitError(f"classical bit {b} read before any write")

    def walk(instrs: Iterable[Instruction], written: set[int]) -> set[int]:
        for ins in instrs:
            if isinstance(ins, Unitary):
                for q in ins.qubits:
                    q_ok(q)
            elif isinstance(ins, Measure):
                q_ok(ins.qubit)
                c_ok(ins.clbit)
                written.add(ins.clbit)
            elif isinstance(ins, Reset):
                q_ok(ins.qubit)
            elif isinstance(ins, Conditional):
                need_written(ins.guard, written)
                # The body may not run: its writes are not guaranteed after.
                walk(ins.body, set(written))
            elif isinstance(ins, RepeatUntil):
                # Do-while: the body runs at least once, so its unconditional
                # writes are visible to the loop condition and afterwards.
                written = walk(ins.body, written)
                need_written(ins.condition(), written)
            elif isinstance(ins, (Discard, IdleBarrier)):
                pass
            else:  # pragma: no cover - defensive
                raise CircuitError(f"unknown instruction {ins!r}")
        return written

    walk(instructions, set())


# ---------------------------------------------------------------------------
# Resource accounting

@dataclass(frozen=True, slots=True)
class ResourceCount:
    two_qubit_gates: int = 0
    mid_circuit_measurements: int = 0
    resets: int = 0
    max_qubits_live: int = 0
    depth: int = 0

    def __add__(self, other: "ResourceCount") -> "ResourceCount":
        return ResourceCount(
            self.two_qubit_gates + other.two_qubit_gates,
            self.mid_circuit_measurements + other.mid_circuit_measurements,
            self.resets + other.resets,
            max(self.max_qubits_live, other.max_qubits_live),
            self.depth + other.depth,
        )


def count_resources(circuit: Circuit) -> ResourceCount:
    """Static resource count: repeat bodies at ``max_iters``, conditional
    bodies counted in full (an upper bound on any single trajectory).

    Per-trajectory observed counts live on ``TrajectoryResult.resources``.
    A measurement is *mid-circuit* unless it belongs to the trailing
    measurement-only suffix of the top-level instruction list.
    """
    two_q = resets = measures = 0
    qubits_seen: set[int] = set()
    level: dict[int, int] = {}

    def visit(ins: Instruction, mult: int) -> None:
        nonlocal two_q, resets, measures
        if isinstance(ins, Unitary):
            qubits_seen.update(ins.qubits)
            if len(ins.qubits) == 2:
                two_q += mult
            lvl = 1 + max((level.get(q, 0) for q in ins.qubits), default=0)
            for q in ins.qubits:
                level[q] = lvl
        elif isinstance(ins, Measure):
            qubits_seen.add(ins.qubit)
            measures += mult
            level[ins.qubit] = level.get(ins.qubit, 0) + 1
        elif isinstance(ins, Reset):
            qubits_seen.add(ins.qubit)
            resets += mult
            level[ins.qubit] = level.get(ins.qubit, 0) + 1
        elif isinstance(ins, Conditional):
            for sub in ins.body:
                visit(sub, mult)
        elif isinstance(ins, RepeatUntil):
            for sub in ins.body:
                visit(sub, mult * ins.max_iters)

    # Trailing Measure instructions at top level are terminal readout.
    tail = len(circuit.instructions)
    while tail > 0 and isinstance(circuit.instructions[tail - 1], Measure):
        tail -= 1
    for i, ins in enumerate(circuit.instructions):
        if isinstance(ins, Measure) and i >= tail:
            qubits_seen.add(ins.qubit)
            level[ins.qubit] = level.get(ins.qubit, 0) + 1
            continue
        visit(ins, 1)

    return ResourceCount(
        two_qubit_gates=two_q,
        mid_circuit_measurements=measures,
        resets=resets,
        max_qubits_live=len(qubits_seen),
        depth=max(level.values(), default=0),
    )


# ---------------------------------------------------------------------------
# Text serialization
#
# One instruction per line; nested blocks indented by two spaces and closed
# with a bare "}".  Grammar (also in docs/circuit-format.md):
#
#   circuit   := header line*                header := "qubits N" "clbits N"
#   meta      := "meta" KEY JSON
#   unitary   := GATE [ANGLE] QUBIT+        e.g.  "cx 0 1", "rz 0.5 3"
#   measure   := "measure" QUBIT "->" CLBIT
#   reset     := "reset" QUBIT
#   barrier   := "barrier" LABEL [SECONDS]
#   discard   := "discard"
#   cond      := "cond" PRED "{" body "}"
#   repeat    := "repeat" ("c" N "==" BIT | "until" PRED)
#                "max" N ("discard"|"continue") "{" body "}"
#   PRED      := CLAUSE (" | " CLAUSE)*     CLAUSE := TEST (" & " TEST)*
#   TEST      := cN("^"cN)* "==" BIT
#
# Angles and durations print via repr() so round trips are bit-exact.

def serialize(circuit: Circuit) -> str:
    out: list[str] = [f"qubits {circuit.num_qubits}", f"clbits {circuit.num_clbits}"]
    for key in sorted(circuit.metadata):
        out.append(f"meta {key} {json.dumps(circuit.metadata[key])}")
    _emit(circuit.instructions, out, 0)
    return "\n".join(out) + "\n"


def _fmt_pred(p: Predicate) -> str:
    def fmt_test(t: ParityTest) -> str:
        return "^".join(f"c{b}" for b in t.bits) + f" == {t.value}"

    return " | ".join(" & ".join(fmt_test(t) for t in clause) for clause in p.clauses)


def _emit(instructions: Iterable[Instruction], out: list[str], depth: int) -> None:
    pad = "  " * depth
    for ins in instructions:
        if isinstance(ins, Unitary):
            parts = [ins.name.lower()]
            if ins.angle is not None:
                parts.append(repr(ins.angle))
            parts.extend(str(q) for q in ins.qubits)
            out.append(pad + " ".join(parts))
        elif isinstance(ins, Measure):
            out.append(f"{pad}measure {ins.qubit} -> {ins.clbit}")
        elif isinstance(ins, Reset):
            out.append(f"{pad}reset {ins.qubit}")
        elif isinstance(ins, IdleBarrier):
            if ins.duration is None:
                out.append(f"{pad}barrier {ins.label}")
            else:
                out.append(f"{pad}barrier {ins.label} {ins.duration!r}")
        elif isinstance(ins, Discard):
            out.append(f"{pad}discard")
        elif isinstance(ins, Conditional):
            out.append(f"{pad}cond {_fmt_pred(ins.guard)} {{")
            _emit(ins.body, out, depth + 1)
            out.append(pad + "}")
        elif isinstance(ins, RepeatUntil):
            if ins.until is not None:
                head = f"repeat until {_fmt_pred(ins.until)}"
            else:
                head = f"repeat c{ins.clbit} == {ins.target}"
            out.append(f"{pad}{head} max {ins.max_iters} {ins.on_exhaust} {{")
            _emit(ins.body, out, depth + 1)
            out.append(pad + "}")
        else:  # pragma: no cover - defensive
            raise CircuitError(f"cannot serialize {ins!r}")


def deserialize(text: str) -> Circuit:
    lines = text.splitlines()
    pos = 0

    def error(msg: str, lineno: int, col: int = 1) -> ParseError:
        return ParseError(msg, lineno, col)

    def next_content() -> Optional[tuple[int, str]]:
        nonlocal pos
        while pos < len(lines):
            raw = lines[pos]
            pos += 1
            stripped = raw.strip()
            if stripped and not stripped.startswith("#"):
                return pos, stripped
        return None

    def expect_header(name: str) -> int:
        got = next_content()
        if got is None:
            raise error(f"missing {name!r} header", len(lines) + 1)
        lineno, line = got
        parts = line.split()
        if len(parts) != 2 or parts[0] != name:
            raise error(f"expected {name!r} header, got {line!r}", lineno)
        try:
            return int(parts[1])
        except ValueError:
            raise error(f"bad {name} count {parts[1]!r}", lineno, len(name) + 2) from None

    nq = expect_header("qubits")
    nc = expect_header("clbits")

    metadata: dict[str, object] = {}

    def parse_pred(src: str, lineno: int) -> Predicate:
        clauses = []
        for clause_src in src.split("|"):
            tests = []
            for test_src in clause_src.split("&"):
                test_src = test_src.strip()
                if "==" not in test_src:
                    raise error(f"parity test {test_src!r} missing '=='", lineno,
                                len(src) - len(test_src) + 1)
                bits_src, _, val_src = test_src.partition("==")
                bits = []
                for tok in bits_src.strip().split("^"):
                    tok = tok.strip()
                    if not tok.startswith("c") or not tok[1:].isdigit():
                        raise error(f"bad bit reference {tok!r}", lineno)
                    bits.append(int(tok[1:]))
                val_src = val_src.strip()
                if val_src not in ("0", "1"):
                    raise error(f"bad test value {val_src!r}", lineno)
                tests.append(ParityTest(tuple(bits), int(val_src)))
            if not tests:
                raise error("empty clause", lineno)
            clauses.append(tuple(tests))
        return Predicate(tuple(clauses))

    def parse_block() -> tuple[Instruction, ...]:
        body: list[Instruction] = []
        while True:
            got = next_content()
            if got is None:
                raise error("unterminated block (missing '}')", len(lines) + 1)
            lineno, line = got
            if line == "}":
                return tuple(body)
            body.append(parse_instruction(lineno, line))

    def parse_instruction(lineno: int, line: str) -> Instruction:
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        try:
            if head == "measure":
                left, arrow, right = rest.partition("->")
                if not arrow:
                    raise error("measure needs 'qubit -> clbit'", lineno)
                return Measure(int(left), int(right))
            if head == "reset":
                return Reset(int(rest))
            if head == "discard":
                return Discard()
            if head == "barrier":
                parts = rest.split()
                if len(parts) == 1:
                    return IdleBarrier(parts[0])
                if len(parts) == 2:
                    return IdleBarrier(parts[0], float(parts[1]))
                raise error("barrier takes a label and optional duration", lineno)
            if head == "cond":
                if not rest.endswith("{"):
                    raise error("cond line must end with '{'", lineno, len(line))
                guard = parse_pred(rest[:-1].strip(), lineno)
                return Conditional(guard, parse_block())
            if head == "repeat":
                if not rest.endswith("{"):
                    raise error("repeat line must end with '{'", lineno, len(line))
                spec = rest[:-1].strip()
                tokens = spec.split()
                if "max" not in tokens:
                    raise error("repeat needs a 'max' bound", lineno)
                mi = len(tokens) - 1 - tokens[::-1].index("max")
                cond_src = " ".join(tokens[:mi])
                tail = tokens[mi + 1:]
                if len(tail) != 2:
                    raise error("repeat tail must be 'max N discard|continue'", lineno)
                max_iters = int(tail[0])
                on_exhaust = tail[1]
                if cond_src.startswith("until "):
                    return RepeatUntil(parse_block(), max_iters,
                                       until=parse_pred(cond_src[6:], lineno),
                                       on_exhaust=on_exhaust)
                bit_src, eq, val_src = cond_src.partition("==")
                bit_src = bit_src.strip()
                if not eq or not bit_src.startswith("c"):
                    raise error(f"bad repeat condition {cond_src!r}", lineno)
                return RepeatUntil(parse_block(), max_iters, clbit=int(bit_src[1:]),
                                   target=int(val_src), on_exhaust=on_exhaust)
            # Otherwise: a gate line.
            gate = _GATE_BY_LOWER.get(head)
            if gate is None:
                raise error(f"unknown instruction {head!r}", lineno)
            parts = rest.split()
            angle = None
            if gate in ANGLE_GATES:
                if not parts:
                    raise error(f"{head} needs an angle", lineno)
                angle = float(parts[0])
                parts = parts[1:]
            qubits = tuple(int(p) for p in parts)
            return Unitary(gate, qubits, angle)
        except ParseError:
            raise
        except (ValueError, CircuitError) as exc:
            raise error(str(exc), lineno) from None

    instructions: list[Instruction] = []
    while True:
        got = next_content()
        if got is None:
            break
        lineno, line = got
        if line.startswith("meta "):
            parts = line.split(None, 2)
            if len(parts) != 3:
                raise error("meta needs a key and a JSON value", lineno)
            try:
                metadata[parts[1]] = json.loads(parts[2])
            except json.JSONDecodeError as exc:
                raise error(f"bad meta value: {exc.msg}", lineno, 6 + len(parts[1])) from None
            continue
        if line == "}":
            raise error("unmatched '}'", lineno)
        instructions.append(parse_instruction(lineno, line))

    try:
        return Circuit(nq, nc, tuple(instructions), metadata)
    except CircuitError as exc:
        raise ParseError(str(exc), 1) from None
