"""Trajectory noise model: gate-level Pauli faults, readout flips, and an
idle-time memory channel (coherent Z rotation at rate ``f`` plus stochastic
Z flips at rate ``g``).

Each shot unravels the channels into a definite sequence of events, so a
trajectory is a pure-state evolution.  Probabilities below are per-event;
the memory channel scales with accumulated idle seconds.  Defaults describe
a trapped-ion system in the regime this package targets.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np

__all__ = [
    "NoiseModel",
    "PAULI_1Q",
    "PAULI_2Q",
    "sample_gate_fault",
    "flip_readout",
    "memory_flush",
]

PAULI_1Q: tuple[str, ...] = ("X", "Y", "Z")
# All 15 non-identity pairs, row-major over (first, second) in I,X,Y,Z order.
PAULI_2Q: tuple[tuple[str, str], ...] = tuple(
    (a, b) for a in "IXYZ" for b in "IXYZ" if (a, b) != ("I", "I")
)

DEFAULT_DURATIONS: Mapping[str, float] = {
    "unitary_1q": 2e-4,
    "unitary_2q": 2e-3,
    "measure": 4e-2,
    "reset": 4e-3,
    "idle": 0.0,
}


def _uniform(n: int) -> tuple[float, ...]:
    return (1.0 / n,) * n


@dataclass(frozen=True)
class NoiseModel:
    """Immutable parameter bundle; ``replace``-style copies via ``with_()``."""

    p1: float = 2.9e-5
    p2: float = 1.28e-3
    p_init: float = 4e-5
    p_readout_1to0: float = 2.5e-3
    p_readout_0to1: float = 0.5e-3
    f: float = 4.3e-2            # coherent Z rate, rad/s of idle
    g: float = 2.8e-3            # stochastic Z rate, 1/s of idle
    weights_1q: tuple[float, ...] = field(default_factory=lambda: _uniform(3))
    weights_2q: tuple[float, ...] = field(default_factory=lambda: _uniform(15))
    durations: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_DURATIONS))

    def __post_init__(self) -> None:
        for name in ("p1", "p2", "p_init", "p_readout_1to0", "p_readout_0to1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} is not a probability")
        if self.f < 0 or self.g < 0:
            raise ValueError(f"memory rates must be nonnegative (f={self.f}, g={self.g})")
        object.__setattr__(self, "weights_1q", tuple(float(w) for w in self.weights_1q))
        object.__setattr__(self, "weights_2q", tuple(float(w) for w in self.weights_2q))
        for name, want in (("weights_1q", 3), ("weights_2q", 15)):
            w = getattr(self, name)
            if len(w) != want:
                raise ValueError(f"{name} needs {want} entries, got {len(w)}")
            if min(w) < 0 or abs(sum(w) - 1.0) > 1e-9:
                raise ValueError(f"{name} must be a distribution, got {w}")
        durations = dict(DEFAULT_DURATIONS)
        durations.update(self.durations)
        for key, v in durations.items():
            if v < 0:
                raise ValueError(f"duration {key!r} must be nonnegative, got {v}")
        object.__setattr__(self, "durations", durations)
        object.__setattr__(self, "_cum_1q", np.cumsum(self.weights_1q))
        object.__setattr__(self, "_cum_2q", np.cumsum(self.weights_2q))

    def with_(self, **overrides) -> "NoiseModel":
        return replace(self, **overrides)

    @property
    def noiseless(self) -> bool:
        return (
            self.p1 == self.p2 == self.p_init == 0.0
            and self.p_readout_1to0 == self.p_readout_0to1 == 0.0
            and self.f == self.g == 0.0
        )

    @classmethod
    def ideal(cls) -> "NoiseModel":
        return cls(p1=0, p2=0, p_init=0, p_readout_1to0=0, p_readout_0to1=0, f=0, g=0)

    # -- (de)serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "p1": self.p1,
            "p2": self.p2,
            "p_init": self.p_init,
            "p_readout_1to0": self.p_readout_1to0,
            "p_readout_0to1": self.p_readout_0to1,
            "f": self.f,
            "g": self.g,
            "weights_1q": list(self.weights_1q),
            "weights_2q": list(self.weights_2q),
            "durations": dict(self.durations),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "NoiseModel":
        known = {
            "p1", "p2", "p_init", "p_readout_1to0", "p_readout_0to1",
            "f", "g", "weights_1q", "weights_2q", "durations",
        }
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown noise-model keys: {sorted(extra)}")
        kwargs = dict(data)
        for key in ("weights_1q", "weights_2q"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "NoiseModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_file(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def default_model() -> NoiseModel:
    """The packaged default parameter set (same values as ``NoiseModel()``)."""
    from importlib.resources import files

    return NoiseModel.from_file(files("qecqpe").joinpath("data/h2_default.json"))


# ---------------------------------------------------------------------------
# Per-event sampling.  Draw discipline (load-bearing for engine conformance):
# a fault check always costs one uniform, plus one more only when it fires;
# a readout flip costs one uniform only when its probability is nonzero.

def sample_gate_fault(
    arity: int, model: NoiseModel, rng: np.random.Generator
) -> Optional[tuple[str, ...]]:
    """Pauli fault after an ``arity``-qubit gate, or None."""
    p = model.p1 if arity == 1 else model.p2
    if p <= 0.0:
        return None
    if rng.random() >= p:
        return None
    v = rng.random()
    if arity == 1:
        return (PAULI_1Q[int(np.searchsorted(model._cum_1q, v, side="right"))],)
    return PAULI_2Q[int(np.searchsorted(model._cum_2q, v, side="right"))]


def flip_readout(bit: int, model: NoiseModel, rng: np.random.Generator) -> int:
    p = model.p_readout_1to0 if bit else model.p_readout_0to1
    if p > 0.0 and rng.random() < p:
        return 1 - bit
    return bit


def memory_flush(
    state,
    qubit: int,
    idle_seconds: float,
    model: NoiseModel,
    rng: np.random.Generator,
    drop_diagonal: bool = False,
) -> None:
    """Apply the accumulated-idle memory channel to one qubit.

    ``drop_diagonal`` skips the state updates (both parts of the channel are
    diagonal, hence unobservable right before a computational-basis
    measurement or reset of the same qubit) while still consuming the
    stochastic draw, keeping RNG streams aligned across engines.
    """
    if idle_seconds <= 0.0:
        return
    if model.f != 0.0 and not drop_diagonal:
        state.apply_unitary("RZ", (qubit,), model.f * idle_seconds)
    if model.g != 0.0:
        pz = model.g * idle_seconds
        if pz > 1.0:
            warnings.warn(
                f"stochastic memory probability g*t = {pz:.3g} clamped to 1",
                RuntimeWarning,
                stacklevel=2,
            )
            pz = 1.0
        if rng.random() < pz and not drop_diagonal:
            state.apply_pauli(qubit, "Z")
