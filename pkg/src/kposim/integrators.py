"""Explicit Runge-Kutta steppers (pure-Python/numpy reference implementation).

``_kernels.pyx`` mirrors :func:`dopri5`, :func:`rk4` and :func:`pure_rhs` for
pure states; keep the step-size logic identical in both.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .drives import evaluate_table

# Dormand-Prince 5(4) tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                          22 / 525, -1 / 40)

SAFETY, MIN_FACTOR, MAX_FACTOR = 0.9, 0.2, 10.0


class PropagationError(RuntimeError):
    """The integrator could not continue (step underflow or non-finite state)."""


@dataclass
class StepStats:
    steps: int = 0
    rejected: int = 0
    rhs_evals: int = 0
    min_step: float = math.inf
    max_step_taken: float = 0.0
    log_norm: float = 0.0

    def as_dict(self) -> dict:
        return {"steps": self.steps, "rejected": self.rejected, "rhs_evals": self.rhs_evals,
                "min_step": self.min_step if self.steps else 0.0,
                "max_step": self.max_step_taken,
                "renorm_drift": abs(math.expm1(self.log_norm))}


def _err_norm(err: np.ndarray, y: np.ndarray, y_new: np.ndarray, rtol: float, atol: float) -> float:
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return math.sqrt(float(np.mean((np.abs(err) / scale) ** 2)))


def initial_step(rhs, t0: float, y0: np.ndarray, f0: np.ndarray, rtol: float, atol: float,
                 max_step: float) -> float:
    """Hairer-Norsett-Wanner starting step for a fifth-order method."""
    scale = atol + rtol * np.abs(y0)
    d0 = math.sqrt(float(np.mean((np.abs(y0) / scale) ** 2)))
    d1 = math.sqrt(float(np.mean((np.abs(f0) / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, max_step)
    f1 = rhs(t0 + h0, y0 + h0 * f0)
    d2 = math.sqrt(float(np.mean((np.abs(f1 - f0) / scale) ** 2))) / h0
    dmax = max(d1, d2)
    h1 = max(1e-6, h0 * 1e-3) if dmax <= 1e-15 else (0.01 / dmax) ** 0.2
    return min(100 * h0, h1, max_step)


_A_ROWS = [np.array(r, dtype=complex) for r in ([A21], [A31, A32], [A41, A42, A43], [A51, A52, A53, A54],
                                   [A61, A62, A63, A64, A65])]
_C = (C2, C3, C4, C5, 1.0)
# complex so that the products with the stage stack go through BLAS
_B = np.array([B1, 0.0, B3, B4, B5, B6], dtype=complex)
_E = np.array([E1, 0.0, E3, E4, E5, E6, E7], dtype=complex)


def dopri5(rhs: Callable[[float, np.ndarray], np.ndarray], y0: np.ndarray, t0: float,
           sample_times: np.ndarray, rtol: float, atol: float, max_step: float = math.inf,
           first_step: float | None = None,
           post_step: Callable[[np.ndarray], np.ndarray] | None = None,
           stats: StepStats | None = None):
    """Adaptive Dormand-Prince 5(4) integration.

    Steps are clipped to land exactly on every sample time. Returns the list
    of states at ``sample_times`` and a :class:`StepStats`.
    """
    y = np.array(y0, dtype=complex)
    t = float(t0)
    stats = stats if stats is not None else StepStats()
    # stage derivatives stacked so each stage combination is one BLAS product
    K = np.empty((7, y.size), dtype=complex)
    K[0] = rhs(t, y)
    stats.rhs_evals += 1
    if first_step is None:
        h = initial_step(rhs, t, y, K[0], rtol, atol, max_step)
        stats.rhs_evals += 1
    else:
        h = min(first_step, max_step)
    out = []
    for t_target in sample_times:
        t_target = float(t_target)
        while t < t_target:
            h = min(h, max_step)
            land = h >= t_target - t
            h_try = t_target - t if land else h
            if h_try <= 1e-14 * max(1.0, abs(t)):
                raise PropagationError(f"step size underflow at t={t}")
            for i, (a_row, c) in enumerate(zip(_A_ROWS, _C), start=1):
                K[i] = rhs(t + c * h_try, y + h_try * (a_row @ K[:i]))
            y_new = y + h_try * (_B @ K[:6])
            t_new = t_target if land else t + h_try
            K[6] = rhs(t_new, y_new)
            stats.rhs_evals += 6
            err = h_try * (_E @ K)
            err_norm = _err_norm(err, y, y_new, rtol, atol)
            if not math.isfinite(err_norm):
                raise PropagationError(f"non-finite state at t={t}")
            if err_norm <= 1.0:
                factor = MAX_FACTOR if err_norm == 0 else min(MAX_FACTOR, SAFETY * err_norm ** -0.2)
                stats.steps += 1
                stats.min_step = min(stats.min_step, h_try)
                stats.max_step_taken = max(stats.max_step_taken, h_try)
                if post_step is not None:
                    y_new = post_step(y_new)
                    K[6] = rhs(t_new, y_new)
                    stats.rhs_evals += 1
                t, y = t_new, y_new
                K[0] = K[6]
                # a clipped landing step must not shrink the next trial step
                h = max(h, h_try * factor) if land else h_try * factor
            else:
                stats.rejected += 1
                h = h_try * max(MIN_FACTOR, SAFETY * err_norm ** -0.2)
        out.append(y.copy())
    return out, stats


def rk4(rhs, y0: np.ndarray, t0: float, sample_times: np.ndarray, step: float,
        post_step=None, stats: StepStats | None = None):
    """Classical fixed-step RK4; each sample interval is split into equal steps."""
    y = np.array(y0, dtype=complex)
    t = float(t0)
    stats = stats if stats is not None else StepStats()
    out = []
    for t_target in sample_times:
        span = float(t_target) - t
        if span > 0:
            n = max(1, int(math.ceil(span / step - 1e-12)))
            h = span / n
            for i in range(n):
                k1 = rhs(t, y)
                k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
                k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
                k4 = rhs(t + h, y + h * k3)
                y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                if not np.all(np.isfinite(y)):
                    raise PropagationError(f"non-finite state at t={t}")
                if post_step is not None:
                    y = post_step(y)
                t = float(t_target) if i == n - 1 else t + h
                stats.steps += 1
                stats.rhs_evals += 4
                stats.min_step = min(stats.min_step, h)
                stats.max_step_taken = max(stats.max_step_taken, h)
        out.append(y.copy())
    return out, stats


def pure_rhs(table: np.ndarray, fac1: np.ndarray, id1: np.ndarray, fac2: np.ndarray,
             id2: np.ndarray):
    """``dy/dt = -i H(t) y`` for a state stored as a flat ``D1*D2`` vector."""
    d1, d2 = fac1.shape[1], fac2.shape[1]
    b_t = np.ascontiguousarray(fac2.transpose(0, 2, 1))
    coeffs = np.empty(table.shape[0], dtype=complex)
    nterm = table.shape[0]

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        evaluate_table(table, t, coeffs)
        Y = y.reshape(d1, d2)
        out = np.zeros((d1, d2), dtype=complex)
        for k in range(nterm):
            c = coeffs[k]
            if c == 0:
                continue
            Z = Y if id1[k] else fac1[k] @ Y
            if not id2[k]:
                Z = Z @ b_t[k]
            out += c * Z
        return (-1j * out).reshape(-1)

    return rhs
