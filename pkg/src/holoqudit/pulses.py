"""Pulse envelopes with piecewise-constant phases.

Amplitudes are angular frequencies with hbar = 1. A drive is stored as a
non-negative envelope magnitude plus a phase that is constant inside each
segment, so a negative amplitude is a phase of pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError, NonPositiveArea

SHAPES = ("constant", "sine_squared", "sine_quartic")

# area = peak * duration * factor
_AREA_FACTOR = {"constant": 1.0, "sine_squared": 0.5, "sine_quartic": 0.375}


@dataclass(frozen=True)
class Envelope:
    shape: str
    peak_amplitude: float
    duration: float

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise InputError(f"unknown envelope shape {self.shape!r}; expected one of {SHAPES}")
        if self.peak_amplitude < 0:
            raise InputError("peak amplitude must be >= 0; encode sign as a phase of pi")
        if not self.duration > 0:
            raise InputError("envelope duration must be > 0")

    def value(self, t):
        """Envelope magnitude at local time ``t`` (zero outside [0, duration])."""
        t = np.asarray(t, dtype=float)
        inside = (t >= 0) & (t <= self.duration)
        if self.shape == "constant":
            v = np.full_like(t, self.peak_amplitude)
        else:
            s2 = np.sin(np.pi * t / self.duration) ** 2
            v = self.peak_amplitude * (s2 if self.shape == "sine_squared" else s2 * s2)
        out = np.where(inside, v, 0.0)
        return float(out) if out.ndim == 0 else out

    def area(self) -> float:
        return pulse_area(self)


def pulse_area(envelope: Envelope) -> float:
    """Closed-form integral of ``|envelope|`` over its duration."""
    return envelope.peak_amplitude * envelope.duration * _AREA_FACTOR[envelope.shape]


def envelope_for_area(shape: str, area: float, duration: float = 1.0) -> Envelope:
    return Envelope(shape, area / (duration * _AREA_FACTOR[shape]), duration)


@dataclass(frozen=True)
class SegmentedPulse:
    segments: tuple[tuple[Envelope, float], ...]

    def __post_init__(self):
        if not self.segments:
            raise InputError("a pulse needs at least one segment")
        object.__setattr__(
            self, "segments", tuple((env, float(phase)) for env, phase in self.segments)
        )

    @property
    def total_duration(self) -> float:
        return math.fsum(env.duration for env, _ in self.segments)

    @property
    def boundaries(self) -> tuple[float, ...]:
        """Cumulative segment end times, starting with 0."""
        out = [0.0]
        for env, _ in self.segments:
            out.append(out[-1] + env.duration)
        return tuple(out)

    @property
    def phases(self) -> tuple[float, ...]:
        return tuple(p for _, p in self.segments)

    def areas(self) -> tuple[float, ...]:
        return tuple(pulse_area(env) for env, _ in self.segments)

    def segment_at(self, t: float) -> int | None:
        """Segment containing ``t``; a boundary belongs to the later segment."""
        b = self.boundaries
        if t < 0 or t > b[-1]:
            return None
        for k in range(len(self.segments)):
            if t < b[k + 1]:
                return k
        return len(self.segments) - 1

    def amplitude(self, t: float) -> complex:
        k = self.segment_at(t)
        if k is None:
            return 0j
        env, phase = self.segments[k]
        return env.value(t - self.boundaries[k]) * np.exp(1j * phase)

    def amplitudes(self, ts) -> np.ndarray:
        """Vectorized :meth:`amplitude` over an array of times."""
        ts = np.asarray(ts, dtype=float)
        b = np.array(self.boundaries)
        k = np.clip(np.searchsorted(b, ts, side="right") - 1, 0, len(self.segments) - 1)
        out = np.zeros(ts.shape, dtype=complex)
        for j, (env, phase) in enumerate(self.segments):
            sel = k == j
            if sel.any():
                out[sel] = env.value(ts[sel] - b[j]) * np.exp(1j * phase)
        out[(ts < 0) | (ts > b[-1])] = 0
        return out

    def shifted_phase(self, delta: float) -> "SegmentedPulse":
        return SegmentedPulse(tuple((env, p + delta) for env, p in self.segments))

    def scaled(self, factor: float) -> "SegmentedPulse":
        """Multiply the magnitude by ``|factor|``; a negative factor adds pi to the phase."""
        extra = math.pi if factor < 0 else 0.0
        return SegmentedPulse(
            tuple(
                (Envelope(env.shape, env.peak_amplitude * abs(factor), env.duration), p + extra)
                for env, p in self.segments
            )
        )


def single_segment(envelope: Envelope, phase: float = 0.0) -> SegmentedPulse:
    return SegmentedPulse(((envelope, phase),))


def two_interval_schedule(
    area_per_interval: float,
    phase1: float,
    phase2: float,
    shape: str = "constant",
    interval_duration: float = 1.0,
) -> SegmentedPulse:
    """Two equal-area segments whose phases jump from ``phase1`` to ``phase2``."""
    if not area_per_interval > 0:
        raise NonPositiveArea(f"area per interval must be > 0, got {area_per_interval}")
    env = envelope_for_area(shape, area_per_interval, interval_duration)
    return SegmentedPulse(((env, phase1), (env, phase2)))


def pulse_from_segments(specs: Sequence[dict]) -> SegmentedPulse:
    """Build a pulse from ``[{"shape", "peak_amplitude", "duration", "phase"}, ...]``."""
    segs = []
    for s in specs:
        env = Envelope(s.get("shape", "constant"), float(s["peak_amplitude"]), float(s["duration"]))
        segs.append((env, float(s.get("phase", 0.0))))
    return SegmentedPulse(tuple(segs))
