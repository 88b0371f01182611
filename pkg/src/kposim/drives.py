"""Scalar time coefficients of Hamiltonian terms.

Every coefficient used by the models is one of a handful of closed forms. They
are stored as fixed-width float rows so the compiled integrator can evaluate
them without calling back into Python; :meth:`Coefficient.__call__` is the
reference evaluation and must stay in lockstep with ``_kernels.pyx``.

Row layout (``ROW_WIDTH`` floats)::

    0 kind          1 scale.real    2 scale.imag    3 theta0
    4 env1 kind     5 env1 T        6 env1 beta     7 amp1   8 omega1   9 phase1
    10 env2 kind    11 env2 T       12 env2 beta    13 amp2  14 omega2  15 phase2

Kinds
    CONSTANT   scale
    PHASOR     scale * amp1 * env1(t) * exp(i(omega1 t + phase1))
    COSINE     scale * amp1 * env1(t) * cos(omega1 t + phase1)
    JOSEPHSON  scale * cos(theta0 - m1(t) - m2(t)),
               m_k(t) = amp_k * env_k(t) * cos(omega_k t + phase_k)

Envelopes
    ONE    1
    RAMP   clip(t / T, 0, 1)
    PULSE  tanh(beta t/T) tanh(beta (1 - t/T)) / tanh(beta/2)**2 on [0, T], else 0
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ROW_WIDTH = 16

CONSTANT, PHASOR, COSINE, JOSEPHSON = 0, 1, 2, 3
ENV_ONE, ENV_RAMP, ENV_PULSE = 0, 1, 2


def tanh_pulse(t: float, duration: float, beta: float) -> float:
    """Unit-peak tanh pulse; zero outside ``[0, duration]``."""
    if t < 0.0 or t > duration:
        return 0.0
    s = t / duration
    return math.tanh(beta * s) * math.tanh(beta * (1.0 - s)) / math.tanh(0.5 * beta) ** 2


def envelope_value(kind: int, t: float, duration: float, beta: float) -> float:
    if kind == ENV_ONE:
        return 1.0
    if kind == ENV_RAMP:
        return min(max(t / duration, 0.0), 1.0)
    if kind == ENV_PULSE:
        return tanh_pulse(t, duration, beta)
    raise ValueError(f"unknown envelope kind {kind}")


@dataclass(frozen=True)
class Envelope:
    kind: int = ENV_ONE
    duration: float = 1.0
    beta: float = 1.0

    def __call__(self, t: float) -> float:
        return envelope_value(self.kind, t, self.duration, self.beta)


ONE = Envelope()


def ramp(duration: float) -> Envelope:
    return Envelope(ENV_RAMP, float(duration), 1.0)


def pulse(duration: float, beta: float) -> Envelope:
    if duration <= 0 or beta <= 0:
        raise ValueError("pulse duration and beta must be positive")
    return Envelope(ENV_PULSE, float(duration), float(beta))


@dataclass(frozen=True)
class Tone:
    """``amp * env(t) * cos(omega t + phase)``; the building block of flux drives."""

    amp: float
    omega: float
    envelope: Envelope = ONE
    phase: float = 0.0

    def __call__(self, t: float) -> float:
        return self.amp * self.envelope(t) * math.cos(self.omega * t + self.phase)


SILENT = Tone(0.0, 0.0)


@dataclass(frozen=True)
class Coefficient:
    kind: int
    scale: complex = 1.0
    theta0: float = 0.0
    tone1: Tone = SILENT
    tone2: Tone = SILENT

    def __call__(self, t: float) -> complex:
        kind = self.kind
        if kind == CONSTANT:
            return complex(self.scale)
        if kind == PHASOR:
            tn = self.tone1
            arg = tn.omega * t + tn.phase
            return self.scale * tn.amp * tn.envelope(t) * complex(math.cos(arg), math.sin(arg))
        if kind == COSINE:
            return self.scale * self.tone1(t)
        if kind == JOSEPHSON:
            return self.scale * math.cos(self.theta0 - self.tone1(t) - self.tone2(t))
        raise ValueError(f"unknown coefficient kind {kind}")

    @property
    def is_constant(self) -> bool:
        return self.kind == CONSTANT

    def row(self) -> np.ndarray:
        out = np.zeros(ROW_WIDTH)
        out[0] = self.kind
        out[1] = complex(self.scale).real
        out[2] = complex(self.scale).imag
        out[3] = self.theta0
        for base, tone in ((4, self.tone1), (10, self.tone2)):
            env = tone.envelope
            out[base:base + 6] = (env.kind, env.duration, env.beta, tone.amp, tone.omega, tone.phase)
        return out

    def scaled(self, factor: complex) -> "Coefficient":
        return Coefficient(self.kind, self.scale * factor, self.theta0, self.tone1, self.tone2)

    def without_tone2(self) -> "Coefficient":
        return Coefficient(self.kind, self.scale, self.theta0, self.tone1, SILENT)


def constant(value: complex) -> Coefficient:
    return Coefficient(CONSTANT, value)


def phasor(scale: complex, omega: float, envelope: Envelope = ONE, phase: float = 0.0) -> Coefficient:
    return Coefficient(PHASOR, scale, tone1=Tone(1.0, omega, envelope, phase))


def cosine(scale: float, omega: float, envelope: Envelope = ONE, phase: float = 0.0) -> Coefficient:
    return Coefficient(COSINE, scale, tone1=Tone(1.0, omega, envelope, phase))


def josephson(scale: float, theta0: float, tone1: Tone = SILENT, tone2: Tone = SILENT) -> Coefficient:
    return Coefficient(JOSEPHSON, scale, theta0, tone1, tone2)


def coefficient_table(coeffs) -> np.ndarray:
    rows = [c.row() for c in coeffs]
    if not rows:
        return np.zeros((0, ROW_WIDTH))
    return np.ascontiguousarray(np.stack(rows))


def evaluate_table(table: np.ndarray, t: float, out: np.ndarray | None = None) -> np.ndarray:
    """Evaluate every row of a coefficient table at ``t`` (pure-Python path)."""
    n = table.shape[0]
    if out is None:
        out = np.empty(n, dtype=complex)
    for k in range(n):
        out[k] = _eval_row(table[k], t)
    return out


def _tone_value(row, base: int, t: float) -> float:
    amp = row[base + 3]
    if amp == 0.0:
        return 0.0
    env = envelope_value(int(row[base]), t, row[base + 1], row[base + 2])
    return amp * env * math.cos(row[base + 4] * t + row[base + 5])


def _eval_row(row, t: float) -> complex:
    kind = int(row[0])
    scale = complex(row[1], row[2])
    if kind == CONSTANT:
        return scale
    if kind == PHASOR:
        env = row[7] * envelope_value(int(row[4]), t, row[5], row[6])
        arg = row[8] * t + row[9]
        return scale * env * complex(math.cos(arg), math.sin(arg))
    if kind == COSINE:
        return scale * _tone_value(row, 4, t)
    if kind == JOSEPHSON:
        return scale * math.cos(row[3] - _tone_value(row, 4, t) - _tone_value(row, 10, t))
    raise ValueError(f"unknown coefficient kind {kind}")
