"""Truncated Fock-space algebra.

Dense representations of multi-mode bosonic operators and states. Modes are
ordered; a composite basis index follows ``numpy.kron`` ordering so that the
last mode varies fastest.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln

HERMITIAN_RTOL = 1e-12
STATE_NORM_TOL = 1e-9
TAIL_WARN = 1e-8


class SpaceMismatchError(ValueError):
    """Operands live on different Hilbert spaces."""


class TruncationWarning(UserWarning):
    """A state lost non-negligible weight to the Fock cutoff."""


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array, dtype=complex)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class HilbertSpace:
    """Product of truncated oscillator modes."""

    mode_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.mode_dims)
        if not dims:
            raise ValueError("a Hilbert space needs at least one mode")
        if any(d < 2 for d in dims):
            raise ValueError(f"mode dimensions must be >= 2, got {dims}")
        object.__setattr__(self, "mode_dims", dims)

    @property
    def n_modes(self) -> int:
        return len(self.mode_dims)

    @property
    def total_dim(self) -> int:
        return math.prod(self.mode_dims)

    def check_mode(self, mode: int) -> None:
        if not 0 <= mode < self.n_modes:
            raise IndexError(f"mode {mode} out of range for {self.n_modes}-mode space")

    def identity(self) -> "OperatorMatrix":
        return OperatorMatrix(self, np.eye(self.total_dim), hermitian=True)

    def basis(self, *occupations: int) -> "StateVector":
        if len(occupations) != self.n_modes:
            raise ValueError("one occupation number per mode is required")
        vec = np.zeros(self.total_dim, dtype=complex)
        vec[np.ravel_multi_index(occupations, self.mode_dims)] = 1.0
        return StateVector(self, vec)


def _require_same(a, b) -> None:
    if a.space != b.space:
        raise SpaceMismatchError(f"{a.space.mode_dims} vs {b.space.mode_dims}")


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """A dense operator tagged with the space it acts on.

    ``hermitian=True`` asserts the property at construction time (checked
    against a relative tolerance of 1e-12).
    """

    space: HilbertSpace
    entries: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        entries = _frozen(self.entries)
        n = self.space.total_dim
        if entries.shape != (n, n):
            raise ValueError(f"expected {(n, n)} matrix, got {entries.shape}")
        object.__setattr__(self, "entries", entries)
        if self.hermitian and not is_hermitian(entries):
            raise ValueError("operator flagged Hermitian is not Hermitian")

    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.space, self.entries.conj().T, self.hermitian)

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _require_same(self, other)
        return OperatorMatrix(self.space, self.entries + other.entries,
                              self.hermitian and other.hermitian)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _require_same(self, other)
        return OperatorMatrix(self.space, self.entries - other.entries,
                              self.hermitian and other.hermitian)

    def __neg__(self) -> "OperatorMatrix":
        return OperatorMatrix(self.space, -self.entries, self.hermitian)

    def __mul__(self, scalar) -> "OperatorMatrix":
        scalar = complex(scalar)
        return OperatorMatrix(self.space, scalar * self.entries,
                              self.hermitian and scalar.imag == 0)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, StateVector):
            _require_same(self, other)
            return StateVector(self.space, self.entries @ other.amplitudes, normalize=False)
        if isinstance(other, OperatorMatrix):
            _require_same(self, other)
            return OperatorMatrix(self.space, self.entries @ other.entries)
        return NotImplemented

    def is_hermitian(self, rtol: float = HERMITIAN_RTOL) -> bool:
        return is_hermitian(self.entries, rtol)


def is_hermitian(matrix: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    scale = np.max(np.abs(matrix))
    if scale == 0:
        return True
    return np.max(np.abs(matrix - matrix.conj().T)) < rtol * scale


@dataclass(frozen=True, eq=False)
class StateVector:
    space: HilbertSpace
    amplitudes: np.ndarray
    normalize: bool = field(default=True, repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape != (self.space.total_dim,):
            raise ValueError(f"expected {self.space.total_dim} amplitudes, got {amps.shape}")
        norm = np.linalg.norm(amps)
        if not np.isfinite(norm) or norm == 0:
            raise ValueError("state vector must have finite, positive norm")
        if self.normalize:
            amps = amps / norm
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def as_modes(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per mode."""
        return self.amplitudes.reshape(self.space.mode_dims)

    def projector(self) -> "DensityMatrix":
        return DensityMatrix(self.space, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    space: HilbertSpace
    entries: np.ndarray

    def __post_init__(self):
        entries = _frozen(self.entries)
        n = self.space.total_dim
        if entries.shape != (n, n):
            raise ValueError(f"expected {(n, n)} matrix, got {entries.shape}")
        object.__setattr__(self, "entries", entries)

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.entries + self.entries.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])

    def check(self, tol: float = 1e-9, eig_tol: float = 1e-8) -> None:
        if not np.allclose(self.entries, self.entries.conj().T, atol=tol, rtol=0):
            raise ValueError("density matrix is not Hermitian")
        if abs(self.trace - 1) > tol:
            raise ValueError(f"density matrix trace {self.trace} != 1")
        if self.min_eigenvalue() < -eig_tol:
            raise ValueError("density matrix has negative eigenvalues")

    @classmethod
    def maximally_mixed(cls, space: HilbertSpace) -> "DensityMatrix":
        n = space.total_dim
        return cls(space, np.eye(n) / n)


# --- single-mode building blocks -------------------------------------------

def lowering_matrix(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def embed(local: np.ndarray, space: HilbertSpace, mode: int) -> np.ndarray:
    """Kronecker-embed a single-mode matrix, identity on the other modes."""
    space.check_mode(mode)
    if local.shape != (space.mode_dims[mode],) * 2:
        raise ValueError("local matrix does not match the mode dimension")
    factors = [local if j == mode else np.eye(d) for j, d in enumerate(space.mode_dims)]
    return reduce(np.kron, factors)


def annihilation(space: HilbertSpace, mode: int = 0) -> OperatorMatrix:
    space.check_mode(mode)
    return OperatorMatrix(space, embed(lowering_matrix(space.mode_dims[mode]), space, mode))


def creation(space: HilbertSpace, mode: int = 0) -> OperatorMatrix:
    return annihilation(space, mode).dag()


def number(space: HilbertSpace, mode: int = 0) -> OperatorMatrix:
    space.check_mode(mode)
    local = np.diag(np.arange(space.mode_dims[mode], dtype=float))
    return OperatorMatrix(space, embed(local, space, mode), hermitian=True)


def quadrature(space: HilbertSpace, mode: int = 0, kind: str = "x") -> OperatorMatrix:
    """``x = a† + a`` or ``p = i(a† - a)``."""
    a = annihilation(space, mode).entries
    if kind == "x":
        mat = a.conj().T + a
    elif kind == "p":
        mat = 1j * (a.conj().T - a)
    else:
        raise ValueError(f"unknown quadrature {kind!r}")
    return OperatorMatrix(space, mat, hermitian=True)


def charge_phase_scales(E_C: float, EJ_eff: float, N: int) -> tuple[float, float]:
    """Prefactors ``(s_n, s_phi)`` with ``n = i s_n (a† - a)``, ``phi = s_phi (a† + a)``."""
    if E_C <= 0 or EJ_eff <= 0:
        raise ValueError("charging and Josephson energies must be positive")
    if N < 1:
        raise ValueError("N must be >= 1")
    s_n = (EJ_eff / (32.0 * N * E_C)) ** 0.25
    s_phi = (2.0 * N * E_C / EJ_eff) ** 0.25
    return s_n, s_phi


def charge_phase_operators(space: HilbertSpace, mode: int, E_C: float, EJ_eff: float,
                           N: int) -> tuple[OperatorMatrix, OperatorMatrix]:
    """Cooper-pair number and phase operators of a transmon-like mode."""
    s_n, s_phi = charge_phase_scales(E_C, EJ_eff, N)
    n_op = s_n * quadrature(space, mode, "p")
    phi_op = s_phi * quadrature(space, mode, "x")
    return (OperatorMatrix(space, n_op.entries, hermitian=True),
            OperatorMatrix(space, phi_op.entries, hermitian=True))


def hermitian_function(matrix: np.ndarray, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    evals, vecs = np.linalg.eigh(0.5 * (matrix + matrix.conj().T))
    return (vecs * f(evals)) @ vecs.conj().T


def operator_function(op: OperatorMatrix, f: Callable[[np.ndarray], np.ndarray]) -> OperatorMatrix:
    """Apply a real scalar function through the eigendecomposition of ``op``.

    ``f`` must accept an array of eigenvalues.
    """
    if not op.is_hermitian():
        raise ValueError("operator_function requires a Hermitian operator")
    out = hermitian_function(op.entries, f)
    return OperatorMatrix(op.space, 0.5 * (out + out.conj().T), hermitian=True)


# --- states -----------------------------------------------------------------

def coherent_amplitudes(dim: int, alpha: complex) -> tuple[np.ndarray, float]:
    """Fock amplitudes of |alpha> up to ``dim - 1`` and the discarded tail mass."""
    n = np.arange(dim)
    r = abs(alpha)
    if r == 0:
        vec = np.zeros(dim, dtype=complex)
        vec[0] = 1.0
        return vec, 0.0
    log_mag = -0.5 * r * r + n * math.log(r) - 0.5 * gammaln(n + 1)
    vec = np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))
    tail = max(0.0, 1.0 - float(np.sum(np.abs(vec) ** 2)))
    return vec, tail


def recommended_dim(alpha: complex) -> int:
    r = abs(alpha)
    return int(math.ceil(r * r + 5 * r + 10))


def coherent_state(space: HilbertSpace, alphas: Sequence[complex] | complex) -> StateVector:
    """Product coherent state, renormalized after truncation."""
    if np.isscalar(alphas):
        alphas = [alphas]
    if len(alphas) != space.n_modes:
        raise ValueError("one amplitude per mode is required")
    vecs = []
    for dim, alpha in zip(space.mode_dims, alphas):
        vec, tail = coherent_amplitudes(dim, alpha)
        if tail > TAIL_WARN:
            warnings.warn(f"coherent state alpha={alpha} loses {tail:.2e} beyond D={dim}",
                          TruncationWarning, stacklevel=2)
        vecs.append(vec / np.linalg.norm(vec))
    return StateVector(space, reduce(np.kron, vecs))


def coherent_overlap(beta: complex, gamma: complex) -> complex:
    """Analytic <beta|gamma> for untruncated coherent states."""
    return complex(np.exp(-0.5 * abs(beta) ** 2 - 0.5 * abs(gamma) ** 2 + np.conj(beta) * gamma))


def cat_pair_states(space: HilbertSpace, alpha: float) -> tuple[StateVector, StateVector]:
    """Two-mode cats ``|a,a> + |-a,-a>`` (even) and ``|a,-a> + |-a,a>`` (odd)."""
    if space.n_modes != 2:
        raise ValueError("cat pair states need a two-mode space")
    pp = coherent_state(space, [alpha, alpha]).amplitudes
    mm = coherent_state(space, [-alpha, -alpha]).amplitudes
    pm = coherent_state(space, [alpha, -alpha]).amplitudes
    mp = coherent_state(space, [-alpha, alpha]).amplitudes
    comps = np.stack([pp, mm, pm, mp])
    gram = comps.conj() @ comps.T
    even_c = np.array([1, 1, 0, 0], dtype=complex)
    odd_c = np.array([0, 0, 1, 1], dtype=complex)
    norm_even = math.sqrt((even_c.conj() @ gram @ even_c).real)
    norm_odd = math.sqrt((odd_c.conj() @ gram @ odd_c).real)
    even = StateVector(space, (even_c @ comps) / norm_even, normalize=False)
    odd = StateVector(space, (odd_c @ comps) / norm_odd, normalize=False)
    return even, odd


# --- generic algebra ----------------------------------------------------------

def tensor(*ops: OperatorMatrix) -> OperatorMatrix:
    space = HilbertSpace(tuple(d for op in ops for d in op.space.mode_dims))
    return OperatorMatrix(space, reduce(np.kron, [op.entries for op in ops]),
                          all(op.hermitian for op in ops))


def tensor_states(*states: StateVector) -> StateVector:
    space = HilbertSpace(tuple(d for s in states for d in s.space.mode_dims))
    return StateVector(space, reduce(np.kron, [s.amplitudes for s in states]))


def dagger(op: OperatorMatrix) -> OperatorMatrix:
    return op.dag()


def inner_product(bra: StateVector, ket: StateVector) -> complex:
    _require_same(bra, ket)
    return complex(np.vdot(bra.amplitudes, ket.amplitudes))


def expectation(op: OperatorMatrix, state: StateVector | DensityMatrix) -> complex:
    """``<psi|O|psi>`` or ``Tr(O rho)``; real-valued for Hermitian ``op``."""
    _require_same(op, state)
    if isinstance(state, DensityMatrix):
        value = complex(np.sum(op.entries * state.entries.T))
    else:
        psi = state.amplitudes
        value = complex(np.vdot(psi, op.entries @ psi))
    if op.hermitian:
        return value.real
    return value


def commutator(a: OperatorMatrix, b: OperatorMatrix) -> OperatorMatrix:
    return a @ b - b @ a
