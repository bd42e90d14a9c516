"""Hard-pulse sequences and their propagators.

A :class:`PulseSequence` is a timeline of :class:`PulseEvent` objects with
explicit start times. Events appended together start at the same instant,
which is how simultaneous pulses on the two channels are expressed.

RF phase follows the usual spectrometer convention: phase 0 drives along
+x, 90 degrees along +y. A pulse of flip ``theta`` and phase ``phi`` is
``exp(+i theta/2 (cos(phi) X + sin(phi) Y))`` under
``H_rf = -(wx X + wy Y)/2``. An infinite nutation rate gives an
instantaneous (ideal) rotation.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from ..lattice import SQRT_SWAP, SWAP
from .operators import (
    SpinSystem,
    expm_hermitian,
    gradient_hamiltonian,
    internal_hamiltonian,
    rf_hamiltonian,
    spin_op,
)

__all__ = [
    "PulseEvent",
    "PulseSequence",
    "rf_pulse",
    "delay",
    "gradient",
    "rotation",
    "compile_collision",
    "compile_swap",
    "compile_zz_sandwich",
    "sequence_unitary",
    "gate_fidelity",
    "UNITARY_TOL",
]

UNITARY_TOL = 1e-12
_KINDS = ("rf", "delay", "gradient")


@dataclass(frozen=True)
class PulseEvent:
    kind: str
    duration: float = 0.0
    start: float = 0.0
    spin: int | None = None
    phase: float = 0.0  # rad
    flip: float = 0.0  # rad
    nutation: float = 0.0  # Hz, math.inf for an ideal pulse
    gradient: float = 0.0  # T/m

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.duration < 0 or self.start < 0:
            raise ValueError("event times must be non-negative")
        if self.kind == "rf":
            if self.spin not in (1, 2):
                raise ValueError("rf pulses need spin 1 or 2")
            if not self.nutation > 0:
                raise ValueError("nutation rate must be positive")

    @property
    def end(self) -> float:
        return self.start + self.duration

    @property
    def ideal(self) -> bool:
        return self.kind == "rf" and math.isinf(self.nutation)

    @property
    def amplitude(self) -> float:
        """RF amplitude w = 2 pi nu in rad/s."""
        return 2 * math.pi * self.nutation


def rf_pulse(spin: int, phase: float, flip: float, nutation: float = math.inf) -> PulseEvent:
    """Hard pulse; duration is ``flip / (2 pi nutation)`` (0 if ideal)."""
    if flip < 0:
        phase, flip = phase + math.pi, -flip
    duration = 0.0 if math.isinf(nutation) else flip / (2 * math.pi * nutation)
    return PulseEvent("rf", duration=duration, spin=spin, phase=phase % (2 * math.pi),
                      flip=flip, nutation=nutation)


def delay(duration: float) -> PulseEvent:
    return PulseEvent("delay", duration=duration)


def gradient(strength: float, duration: float) -> PulseEvent:
    return PulseEvent("gradient", duration=duration, gradient=strength)


def rotation(event: PulseEvent) -> np.ndarray:
    """Unitary of an ideal rf event."""
    axis = math.cos(event.phase) * spin_op("x", event.spin) + math.sin(event.phase) * spin_op(
        "y", event.spin
    )
    return math.cos(event.flip / 2) * np.eye(4) + 1j * math.sin(event.flip / 2) * axis


@dataclass
class PulseSequence:
    events: list[PulseEvent] = field(default_factory=list)
    name: str = ""

    @property
    def duration(self) -> float:
        return max((e.end for e in self.events), default=0.0)

    def append(self, *events: PulseEvent) -> "PulseSequence":
        """Place ``events`` together at the current end of the sequence."""
        t0 = self.duration
        for e in events:
            self.events.append(replace(e, start=t0))
        return self

    def extend(self, other: "PulseSequence") -> "PulseSequence":
        t0 = self.duration
        for e in other.events:
            self.events.append(replace(e, start=t0 + e.start))
        return self

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    _COLUMNS = ("kind", "spin", "phase_deg", "amplitude_hz", "duration_s", "start_s",
                "flip_deg", "gradient_t_per_m")

    def to_table(self) -> str:
        """One event per line, whitespace separated, with a header row."""
        out = io.StringIO()
        out.write(" ".join(self._COLUMNS) + "\n")
        for e in self.events:
            spin = "-" if e.spin is None else str(e.spin)
            amp = "inf" if math.isinf(e.nutation) else repr(float(e.nutation))
            out.write(
                f"{e.kind} {spin} {math.degrees(e.phase)!r} {amp} {e.duration!r} "
                f"{e.start!r} {math.degrees(e.flip)!r} {e.gradient!r}\n"
            )
        return out.getvalue()

    @classmethod
    def from_table(cls, text: str, name: str = "") -> "PulseSequence":
        lines = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
        if not lines or tuple(lines[0]) != cls._COLUMNS:
            raise ValueError("pulse table header missing or malformed")
        events = []
        for row in lines[1:]:
            kind, spin, phase, amp, dur, start, flip, grad = row
            events.append(
                PulseEvent(
                    kind,
                    duration=float(dur),
                    start=float(start),
                    spin=None if spin == "-" else int(spin),
                    phase=math.radians(float(phase)),
                    flip=math.radians(float(flip)),
                    nutation=float(amp),
                    gradient=float(grad),
                )
            )
        return cls(events, name=name)


def compile_zz_sandwich(
    t_zz: float, nutation: float = math.inf, *, simultaneous: bool = False, name: str = ""
) -> PulseSequence:
    """exp(-i a YY) exp(-i a ZZ) exp(-i a XX) with a = pi J t_zz / 2.

    The XX and YY factors are ZZ delays conjugated by pi/2 rotations on
    both spins. In time order: +y pulses, delay, -y pulses, delay, -x
    pulses, delay, +x pulses.
    """
    half = math.pi / 2
    seq = PulseSequence(name=name)

    def pair(phase):
        p1 = rf_pulse(1, phase, half, nutation)
        p2 = rf_pulse(2, phase, half, nutation)
        if simultaneous:
            seq.append(p1, p2)
        else:
            seq.append(p1)
            seq.append(p2)

    pair(math.pi / 2)
    seq.append(delay(t_zz))
    pair(3 * math.pi / 2)
    seq.append(delay(t_zz))
    pair(math.pi)
    seq.append(delay(t_zz))
    pair(0.0)
    return seq


def compile_collision(J: float, nutation: float = math.inf, **kw) -> PulseSequence:
    """sqrt-SWAP collision: three ZZ delays of 1/(4J) between pi/2 pulses."""
    if not J > 0:
        raise ValueError("gate compilation needs a positive coupling J")
    if not nutation > 0:
        raise ValueError("nutation rate must be positive")
    return compile_zz_sandwich(1.0 / (4.0 * J), nutation, name="collision", **kw)


def compile_swap(J: float, nutation: float = math.inf, **kw) -> PulseSequence:
    """SWAP: the collision sequence with 1/(2J) delays."""
    if not J > 0:
        raise ValueError("gate compilation needs a positive coupling J")
    if not nutation > 0:
        raise ValueError("nutation rate must be positive")
    return compile_zz_sandwich(1.0 / (2.0 * J), nutation, name="swap", **kw)


def _segment_hamiltonian(base, active_rf, grad, sys, z):
    H = base.copy()
    for e in active_rf:
        w = e.amplitude
        H = H + rf_hamiltonian(e.spin, w * math.cos(e.phase), w * math.sin(e.phase))
    if grad:
        H = H + gradient_hamiltonian(sys, grad, z)
    return H


def sequence_unitary(
    seq: PulseSequence | Iterable[PulseEvent],
    sys: SpinSystem,
    *,
    z: float = 0.0,
) -> np.ndarray:
    """Time-ordered product of exp(-i H_k t_k) over the piecewise-constant timeline.

    ``H_k`` is the internal Hamiltonian plus every rf event and gradient
    active on segment ``k``; ``z`` is the position seen by gradients.
    Ideal pulses act instantaneously at their start time, in list order.
    """
    events = list(seq)
    base = internal_hamiltonian(sys)
    instant = [e for e in events if e.kind == "rf" and e.ideal]
    timed = [e for e in events if not (e.kind == "rf" and e.ideal)]

    for spin in (1, 2):
        pulses = sorted((e for e in timed if e.kind == "rf" and e.spin == spin),
                        key=lambda e: e.start)
        for a, b in zip(pulses, pulses[1:]):
            if b.start < a.end and b.duration > 0 and a.duration > 0:
                raise ValueError(f"overlapping rf pulses on spin {spin} at t={b.start:.6g}")

    edges = {0.0}
    for e in events:
        edges.update((e.start, e.end))
    edges = sorted(edges)

    U = np.eye(4, dtype=complex)
    for i, t0 in enumerate(edges):
        for e in instant:
            if e.start == t0:
                U = rotation(e) @ U
        if i + 1 == len(edges):
            break
        t1 = edges[i + 1]
        dt = t1 - t0
        if dt <= 0:
            continue
        active = [e for e in timed if e.kind == "rf" and e.start <= t0 and e.end >= t1]
        grad = sum(e.gradient for e in timed
                   if e.kind == "gradient" and e.start <= t0 and e.end >= t1)
        H = _segment_hamiltonian(base, active, grad, sys, z)
        U = expm_hermitian(H, dt) @ U
    return U


def _require_unitary(U, name):
    U = np.asarray(U, dtype=complex)
    if U.shape != (4, 4) or not np.allclose(U.conj().T @ U, np.eye(4), rtol=0, atol=1e-10):
        raise ValueError(f"{name} is not a 4x4 unitary")
    return U


def gate_fidelity(U, V) -> float:
    """|Tr(U^dagger V)| / 4, insensitive to global phase."""
    U = _require_unitary(U, "U")
    V = _require_unitary(V, "V")
    return float(min(1.0, abs(np.trace(U.conj().T @ V)) / 4.0))


TARGETS = {"collision": SQRT_SWAP, "swap": SWAP}
