"""Time integration of pure states and density matrices.

The compiled kernel is used when it is importable (set ``KPOSIM_BACKEND=python``
to force the numpy path). Pure states run the whole adaptive loop in the kernel;
density matrices use a compiled banded right-hand side under the numpy stepper.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import drives, integrators
from .fock import DensityMatrix, HilbertSpace, OperatorMatrix, StateVector, lowering_matrix
from .hamiltonian import TimeDependentHamiltonian
from .integrators import PropagationError

log = logging.getLogger(__name__)

try:
    from . import _kernels
except ImportError:  # pragma: no cover - depends on the build
    _kernels = None

HAVE_COMPILED = _kernels is not None


def default_backend() -> str:
    requested = os.environ.get("KPOSIM_BACKEND", "auto").lower()
    if requested == "python" or not HAVE_COMPILED:
        return "python"
    return "compiled"


@dataclass(frozen=True)
class SolverSettings:
    """Integrator configuration. Times in ns, frequencies in rad/ns."""

    method: str = "dopri5"
    rel_tol: float = 1e-9
    abs_tol: float = 1e-9
    max_step: float = math.inf
    initial_step: float | None = None
    renormalize: bool = False
    backend: str = "auto"

    def __post_init__(self):
        if self.method not in ("dopri5", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")
        for name in ("rel_tol", "abs_tol"):
            value = getattr(self, name)
            if not 0 < value <= 1e-2:
                raise ValueError(f"{name} must lie in (0, 1e-2], got {value}")
        if self.max_step <= 0:
            raise ValueError("max_step must be positive")
        if self.method == "rk4" and self.initial_step is None and not math.isfinite(self.max_step):
            raise ValueError("rk4 needs initial_step or a finite max_step")
        if self.backend not in ("auto", "compiled", "python"):
            raise ValueError(f"unknown backend {self.backend!r}")

    def halved(self) -> "SolverSettings":
        """Tolerances halved, for convergence checks."""
        return replace(self, rel_tol=self.rel_tol / 2, abs_tol=self.abs_tol / 2)

    def resolved_backend(self) -> str:
        if self.backend == "auto":
            return default_backend()
        if self.backend == "compiled" and not HAVE_COMPILED:
            raise RuntimeError("compiled kernels are not built")
        return self.backend

    @property
    def rk4_step(self) -> float:
        return self.initial_step if self.initial_step is not None else self.max_step


def lab_frame_settings(omega_max: float, tol: float = 1e-8, **kw) -> SolverSettings:
    """Settings whose step never exceeds 1/20 of the fastest carrier period."""
    return SolverSettings(rel_tol=tol, abs_tol=tol, max_step=(2 * math.pi / omega_max) / 20, **kw)


@dataclass
class Trajectory:
    times: np.ndarray
    observables: dict[str, np.ndarray]
    norm: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    states: np.ndarray | None = None

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")


def _sample_grid(t0: float, t1: float, n_samples: int | None, sample_times) -> np.ndarray:
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    if sample_times is not None:
        grid = np.asarray(sample_times, dtype=float)
        if grid[0] < t0 or grid[-1] != t1 or np.any(np.diff(grid) <= 0):
            raise ValueError("sample_times must increase, start >= t0 and end at t1")
        return grid
    if n_samples is None or n_samples < 2:
        return np.array([t1])
    grid = np.linspace(t0, t1, n_samples)
    return grid[1:] if grid[0] == t0 else grid


def propagate_pure_arrays(H: TimeDependentHamiltonian, y0: np.ndarray, t0: float,
                          grid: np.ndarray, settings: SolverSettings) -> tuple[np.ndarray, dict]:
    """Integrate the flat amplitude vector ``y0``; one row per grid time."""
    arrays = H.merged().kernel_arrays()
    backend = settings.resolved_backend()
    first = settings.rk4_step if settings.method == "rk4" else settings.initial_step
    if backend == "compiled":
        try:
            states, stats = _kernels.propagate_pure(
                *arrays, y0, grid, float(t0), settings.method, settings.rel_tol,
                settings.abs_tol, settings.max_step, first, settings.renormalize)
        except _kernels.KernelError as exc:
            raise PropagationError(str(exc)) from exc
    else:
        rhs = integrators.pure_rhs(*arrays)
        st = integrators.StepStats()
        post = None
        if settings.renormalize:
            def post(y):
                norm = np.linalg.norm(y)
                st.log_norm += math.log(norm)
                return y / norm
        if settings.method == "rk4":
            out, _ = integrators.rk4(rhs, y0, t0, grid, first, post_step=post, stats=st)
        else:
            out, _ = integrators.dopri5(rhs, y0, t0, grid, settings.rel_tol, settings.abs_tol,
                                        settings.max_step, first, post_step=post, stats=st)
        states, stats = np.array(out), st.as_dict()
    stats["backend"] = backend
    return states, stats


def _observable_columns(states: np.ndarray, observables: Mapping[str, OperatorMatrix] | None):
    cols = {}
    for name, op in (observables or {}).items():
        mat = op.entries
        vals = np.einsum("ti,ij,tj->t", states.conj(), mat, states)
        cols[name] = vals.real if op.hermitian else vals
    return cols


def schrodinger_propagate(H: TimeDependentHamiltonian, psi0: StateVector, t0: float, t1: float,
                          settings: SolverSettings = SolverSettings(),
                          observables: Mapping[str, OperatorMatrix] | None = None,
                          n_samples: int | None = None, sample_times=None,
                          keep_states: bool = False) -> tuple[StateVector, Trajectory]:
    """Solve ``i dpsi/dt = H(t) psi`` from ``t0`` to ``t1``."""
    if psi0.space != H.space:
        raise ValueError("state and Hamiltonian live on different spaces")
    if abs(psi0.norm - 1) > 1e-9:
        raise ValueError("initial state must be normalized")
    grid = _sample_grid(t0, t1, n_samples, sample_times)
    states, stats = propagate_pure_arrays(H, psi0.amplitudes, t0, grid, settings)
    if not np.all(np.isfinite(states[-1])):
        raise PropagationError("non-finite amplitudes")
    norms = np.linalg.norm(states, axis=1)
    # with renormalization the drift is the norm removed along the way
    stats["norm_drift"] = (stats["renorm_drift"] if settings.renormalize
                           else float(abs(norms[-1] - 1)))
    traj = Trajectory(grid, _observable_columns(states, observables), norms, stats,
                      states if keep_states else None)
    final = StateVector(H.space, states[-1], normalize=False)
    return final, traj


# --- Lindblad ----------------------------------------------------------------

class _LocalOperator:
    """A single-mode matrix applied along one axis of a ``(D1, D2, m)`` array.

    Matrices with few nonzero diagonals (everything the simple model uses)
    are applied diagonal by diagonal; others fall back to a dense product.
    """

    def __init__(self, matrix: np.ndarray, offsets: Sequence[int] | None = None):
        d = matrix.shape[0]
        if offsets is None:
            offsets = [k for k in range(-d + 1, d) if np.any(np.diagonal(matrix, k))]
        self.dense = len(offsets) > max(3, d // 3)
        self.matrix = matrix
        self.bands = [] if self.dense else [(k, np.diagonal(matrix, k).copy()) for k in offsets]

    def apply(self, X: np.ndarray, axis: int, out: np.ndarray | None = None, scale: complex = 1.0):
        """``out += scale * (M along axis) X``; returns ``out``."""
        if out is None:
            out = np.zeros_like(X)
        if self.dense:
            out += scale * np.moveaxis(np.tensordot(self.matrix, X, axes=(1, axis)), 0, axis)
            return out
        d = X.shape[axis]
        for k, diag in self.bands:
            # (M X)[i] += M[i, i+k] X[i+k]
            lo, hi = (0, d - k) if k >= 0 else (-k, d)
            shape = [1, 1, 1]
            shape[axis] = hi - lo
            v = (scale * diag).reshape(shape)
            if axis == 0:
                out[lo:hi] += v * X[lo + k:hi + k]
            else:
                out[:, lo:hi] += v * X[:, lo + k:hi + k]
        return out


def _union_offsets(mats: Sequence[np.ndarray]) -> list[int]:
    if not mats:
        return []
    d = mats[0].shape[0]
    return [k for k in range(-d + 1, d) if any(np.any(np.diagonal(m, k)) for m in mats)]


def _place(diag: np.ndarray, offset: int, d: int) -> np.ndarray:
    """Length-``d`` row with ``row[i] = M[i, i + offset]`` (zero outside the band)."""
    row = np.zeros(d, dtype=complex)
    if offset >= 0:
        row[:d - offset] = diag
    else:
        row[-offset:] = diag
    return row


def _compiled_lindblad_rhs(table, dims, only1, only2, prods, ident, F1, F2, offs1, offs2,
                           fac1, fac2, damp1, damp2, jumps, gamma):
    d1, d2 = dims
    ones1, ones2 = np.ones(d1, complex), np.ones(d2, complex)
    fixed = []   # (coefficient index, off1, off2, u, v)
    for k in prods:
        b1, b2 = _LocalOperator(fac1[k]), _LocalOperator(fac2[k])
        if b1.dense or b2.dense:
            raise ValueError("dense product term")
        for o1, g1 in b1.bands:
            for o2, g2 in b2.bands:
                fixed.append((k, o1, o2, _place(g1, o1, d1), _place(g2, o2, d2)))
    for k in ident:
        fixed.append((k, 0, 0, ones1, ones2))
    n_local = len(offs1) + (len(offs2) if d2 > 1 else 0)
    npair = n_local + len(fixed)
    off1 = np.zeros(npair, dtype=np.intc)
    off2 = np.zeros(npair, dtype=np.intc)
    u = np.zeros((npair, d1), dtype=complex)
    v = np.zeros((npair, d2), dtype=complex)
    for p, o in enumerate(offs1):
        off1[p] = o
        v[p] = ones2
    if d2 > 1:
        for q, o in enumerate(offs2):
            off2[len(offs1) + q] = o
            u[len(offs1) + q] = -1j * ones1
    for q, (k, o1, o2, g1, g2) in enumerate(fixed):
        off1[n_local + q], off2[n_local + q] = o1, o2
        v[n_local + q] = g2
    fixed_u = np.array([g1 for _, _, _, g1, _ in fixed]).reshape(len(fixed), d1)
    fixed_k = np.array([k for k, *_ in fixed], dtype=int)
    jump_mode = np.array([axis for axis, _ in jumps], dtype=np.intc)
    jump_off = np.array([op.bands[0][0] for _, op in jumps], dtype=np.intc)
    if any(len(op.bands) != 1 for _, op in jumps):
        raise ValueError("jump operators must have a single band")
    width = max(d1, d2)
    jump_diag = np.zeros((len(jumps), width), dtype=complex)
    for j, (axis, op) in enumerate(jumps):
        d = (d1, d2)[axis]
        jump_diag[j, :d] = _place(op.bands[0][1], op.bands[0][0], d)
    work = np.empty((d1, d2, d1, d2), dtype=complex)

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        c = _kernels.evaluate_table(table, t)
        M1 = np.tensordot(c[only1], F1, axes=1) - 0.5j * gamma * damp1
        for p, o in enumerate(offs1):
            u[p] = -1j * _place(np.diagonal(M1, o), o, d1)
        if d2 > 1:
            M2 = np.tensordot(c[only2], F2, axes=1) - 0.5j * gamma * damp2
            for q, o in enumerate(offs2):
                v[len(offs1) + q] = _place(np.diagonal(M2, o), o, d2)
        if len(fixed):
            u[n_local:] = (-1j * c[fixed_k])[:, None] * fixed_u
        out = np.empty((d1, d2, d1, d2), dtype=complex)
        _kernels.lindblad_rhs(y.reshape(d1, d2, d1, d2), off1, off2, u, v, jump_mode, jump_off,
                              jump_diag, gamma, work, out)
        return out.reshape(-1)

    return rhs


def lindblad_propagate(H: TimeDependentHamiltonian, initial: StateVector | DensityMatrix,
                       gamma: float, t0: float, t1: float,
                       settings: SolverSettings = SolverSettings(),
                       observables: Mapping[str, OperatorMatrix] | None = None,
                       n_samples: int | None = None,
                       sample_times=None) -> tuple[DensityMatrix, Trajectory]:
    """Master equation with single-photon loss of rate ``gamma`` on every mode.

    ``drho/dt = -i[H, rho] + gamma/2 sum_j (2 a_j rho a_j† - {a_j† a_j, rho})``,
    integrated as ``X + X† + gamma sum_j a_j rho a_j†`` with
    ``X = -i H_eff rho`` and ``H_eff = H - i gamma/2 sum_j a_j† a_j``. The
    state is re-Hermitized after every accepted step.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if H.space.n_modes > 2:
        raise ValueError("at most two modes are supported")
    space = H.space
    if isinstance(initial, StateVector):
        rho0 = initial.projector().entries
    else:
        rho0 = np.array(initial.entries)
    n = space.total_dim
    grid = _sample_grid(t0, t1, n_samples, sample_times)
    merged = H.merged()
    table, fac1, id1, fac2, id2 = merged.kernel_arrays()
    d1, d2 = fac1.shape[1], fac2.shape[1]
    shape3 = (d1, d2, n)

    # sort terms: mode-1 only, mode-2 only, products, identity
    only1 = [k for k in range(len(table)) if not id1[k] and id2[k]]
    only2 = [k for k in range(len(table)) if id1[k] and not id2[k]]
    prods = [k for k in range(len(table)) if not id1[k] and not id2[k]]
    ident = [k for k in range(len(table)) if id1[k] and id2[k]]
    damp1 = np.diag(np.arange(d1, dtype=complex)) if d1 > 1 else np.zeros((1, 1), complex)
    damp2 = np.diag(np.arange(d2, dtype=complex)) if d2 > 1 else np.zeros((1, 1), complex)
    offs1 = _union_offsets([fac1[k] for k in only1] + [damp1])
    offs2 = _union_offsets([fac2[k] for k in only2] + [damp2])
    F1 = fac1[only1] if only1 else np.zeros((0, d1, d1), complex)
    F2 = fac2[only2] if only2 else np.zeros((0, d2, d2), complex)
    prod_ops = [(k, _LocalOperator(fac1[k]), _LocalOperator(fac2[k])) for k in prods]
    jumps = []
    if gamma and d1 > 1:
        jumps.append((0, _LocalOperator(lowering_matrix(d1))))
    if gamma and d2 > 1 and space.n_modes == 2:
        jumps.append((1, _LocalOperator(lowering_matrix(d2))))
    evaluate = (_kernels.evaluate_table if settings.resolved_backend() == "compiled"
                else drives.evaluate_table)

    rhs = None
    if settings.resolved_backend() == "compiled":
        try:
            rhs = _compiled_lindblad_rhs(table, (d1, d2), only1, only2, prods, ident, F1, F2,
                                         offs1, offs2, fac1, fac2, damp1, damp2, jumps, gamma)
        except ValueError:
            log.debug("dense factors: master equation falls back to numpy")
    if rhs is None:
        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            rho = y.reshape(shape3)
            c = evaluate(table, t)
            M1 = np.tensordot(c[only1], F1, axes=1) - 0.5j * gamma * damp1
            M2 = np.tensordot(c[only2], F2, axes=1) - 0.5j * gamma * damp2
            # X = -i H_eff rho
            X = _LocalOperator(M1, offs1).apply(rho, 0, scale=-1j)
            if space.n_modes == 2:
                _LocalOperator(M2, offs2).apply(rho, 1, out=X, scale=-1j)
            for k in ident:
                X += (-1j * c[k]) * rho
            for k, op1, op2 in prod_ops:
                if c[k] != 0:
                    op2.apply(op1.apply(rho, 0), 1, out=X, scale=-1j * c[k])
            X = X.reshape(n, n)
            out = X + X.conj().T
            for axis, a in jumps:
                A = a.apply(rho, axis).reshape(n, n)
                # a rho a† = a (a rho)† for Hermitian rho
                out += a.apply(np.ascontiguousarray(A.conj().T).reshape(shape3), axis,
                               scale=gamma).reshape(n, n)
            return out.reshape(-1)

    def hermitize(y: np.ndarray) -> np.ndarray:
        r = y.reshape(n, n)
        return (0.5 * (r + r.conj().T)).reshape(-1)

    if settings.method == "rk4":
        out, st = integrators.rk4(rhs, rho0.reshape(-1), t0, grid, settings.rk4_step, hermitize)
    else:
        out, st = integrators.dopri5(rhs, rho0.reshape(-1), t0, grid, settings.rel_tol,
                                     settings.abs_tol, settings.max_step, settings.initial_step,
                                     post_step=hermitize)
    rhos = np.array(out).reshape(len(grid), n, n)
    traces = np.einsum("tii->t", rhos).real
    cols = {}
    for name, op in (observables or {}).items():
        vals = np.einsum("ij,tji->t", op.entries, rhos)
        cols[name] = vals.real if op.hermitian else vals
    stats = st.as_dict()
    stats["backend"] = settings.resolved_backend()
    stats["trace_drift"] = float(abs(traces[-1] - 1))
    final = DensityMatrix(space, rhos[-1])
    stats["min_eigenvalue"] = final.min_eigenvalue()
    return final, Trajectory(grid, cols, traces, stats)


def reference_propagate(H: TimeDependentHamiltonian, states: Sequence[StateVector], T_g: float,
                        settings: SolverSettings = SolverSettings(), t0: float = 0.0
                        ) -> list[StateVector]:
    """Evolve each state under ``H`` with the gate pulse switched off (``U_0(T_g)``)."""
    H0 = H.gate_off()
    return [schrodinger_propagate(H0, s, t0, t0 + T_g, settings)[0] for s in states]
