"""Time-dependent Hamiltonians as sums of product operators with scalar coefficients.

``H(t) = sum_k c_k(t) * (A_k1 ⊗ A_k2 ⊗ ...)`` where each factor is a single-mode
matrix (``None`` standing for identity). Integrators never assemble the full
matrix; they apply factors mode by mode.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import reduce
from typing import Sequence

import numpy as np

from . import drives
from .drives import Coefficient
from .fock import HilbertSpace, OperatorMatrix, is_hermitian

STATIC, DRIVE, GATE = "static", "drive", "gate"


@dataclass(frozen=True, eq=False)
class Term:
    factors: tuple
    coeff: Coefficient
    role: str = STATIC
    label: str = ""

    def local_factors(self, space: HilbertSpace) -> list[np.ndarray]:
        return [np.eye(d, dtype=complex) if f is None else f
                for f, d in zip(self.factors, space.mode_dims)]

    def matrix(self, space: HilbertSpace) -> np.ndarray:
        return reduce(np.kron, self.local_factors(space))


def local_term(space: HilbertSpace, mode: int, matrix: np.ndarray, coeff: Coefficient,
               role: str = STATIC, label: str = "") -> Term:
    space.check_mode(mode)
    factors = [None] * space.n_modes
    factors[mode] = np.ascontiguousarray(matrix, dtype=complex)
    return Term(tuple(factors), coeff, role, label)


def product_term(space: HilbertSpace, matrices: Sequence[np.ndarray | None], coeff: Coefficient,
                 role: str = STATIC, label: str = "") -> Term:
    if len(matrices) != space.n_modes:
        raise ValueError("one factor per mode is required")
    factors = tuple(None if m is None else np.ascontiguousarray(m, dtype=complex) for m in matrices)
    return Term(factors, coeff, role, label)


class TimeDependentHamiltonian:
    """Immutable sum of :class:`Term` objects on a fixed space."""

    def __init__(self, space: HilbertSpace, terms: Sequence[Term], meta: dict | None = None):
        for term in terms:
            if len(term.factors) != space.n_modes:
                raise ValueError(f"term {term.label!r} has wrong number of factors")
            for f, d in zip(term.factors, space.mode_dims):
                if f is not None and f.shape != (d, d):
                    raise ValueError(f"term {term.label!r} factor shape {f.shape} != {(d, d)}")
        self.space = space
        self.terms = tuple(terms)
        self.meta = dict(meta or {})

    def __repr__(self):
        labels = ", ".join(t.label or "?" for t in self.terms)
        return f"TimeDependentHamiltonian({self.space.mode_dims}, [{labels}])"

    @property
    def is_static(self) -> bool:
        return all(t.coeff.is_constant for t in self.terms)

    def coefficients(self, t: float) -> np.ndarray:
        return np.array([term.coeff(t) for term in self.terms], dtype=complex)

    def matrix(self, t: float) -> np.ndarray:
        n = self.space.total_dim
        out = np.zeros((n, n), dtype=complex)
        for term, c in zip(self.terms, self.coefficients(t)):
            if c != 0:
                out += c * term.matrix(self.space)
        return out

    def at(self, t: float) -> OperatorMatrix:
        return OperatorMatrix(self.space, self.matrix(t))

    def static_operator(self) -> OperatorMatrix:
        if not self.is_static:
            raise ValueError("Hamiltonian has time-dependent terms")
        return OperatorMatrix(self.space, self.matrix(0.0), hermitian=True)

    def hermiticity_error(self, t: float) -> float:
        """``max|H - H†| / max|H|`` at time ``t``."""
        mat = self.matrix(t)
        scale = np.max(np.abs(mat))
        if scale == 0:
            return 0.0
        return float(np.max(np.abs(mat - mat.conj().T)) / scale)

    def is_hermitian_at(self, t: float, rtol: float = 1e-10) -> bool:
        return is_hermitian(self.matrix(t), rtol)

    def gate_off(self) -> "TimeDependentHamiltonian":
        """Same Hamiltonian with the gate pulse amplitude forced to zero."""
        terms = []
        for term in self.terms:
            if term.role != GATE:
                terms.append(term)
            elif term.coeff.kind == drives.JOSEPHSON:
                terms.append(replace(term, coeff=term.coeff.without_tone2(), role=DRIVE))
        return TimeDependentHamiltonian(self.space, terms, {**self.meta, "gate": "off"})

    def plus(self, extra: Sequence[Term]) -> "TimeDependentHamiltonian":
        return TimeDependentHamiltonian(self.space, self.terms + tuple(extra), self.meta)

    def merged(self) -> "TimeDependentHamiltonian":
        """Fold constant single-mode terms into one term per mode."""
        static_local: dict[int, np.ndarray] = {}
        rest = []
        for term in self.terms:
            active = [j for j, f in enumerate(term.factors) if f is not None]
            if term.coeff.is_constant and len(active) <= 1:
                mode = active[0] if active else 0
                d = self.space.mode_dims[mode]
                mat = term.factors[mode] if active else np.eye(d, dtype=complex)
                acc = static_local.setdefault(mode, np.zeros((d, d), dtype=complex))
                acc += complex(term.coeff.scale) * mat
            else:
                rest.append(term)
        folded = [local_term(self.space, mode, mat, drives.constant(1.0), STATIC, f"static[{mode}]")
                  for mode, mat in sorted(static_local.items())]
        return TimeDependentHamiltonian(self.space, folded + rest, self.meta)

    def kernel_arrays(self):
        """Arrays consumed by the integrators for a one- or two-mode space.

        Returns ``(table, fac1, id1, fac2, id2)``: the coefficient table, the
        stacked first- and second-mode factors and flags marking identities.
        A single-mode space is treated as a second mode of dimension one.
        """
        if self.space.n_modes > 2:
            raise ValueError("integrators support at most two modes")
        dims = self.space.mode_dims + (1,) * (2 - self.space.n_modes)
        nterm = len(self.terms)
        fac1 = np.zeros((nterm, dims[0], dims[0]), dtype=complex)
        fac2 = np.zeros((nterm, dims[1], dims[1]), dtype=complex)
        id1 = np.zeros(nterm, dtype=np.int32)
        id2 = np.zeros(nterm, dtype=np.int32)
        for k, term in enumerate(self.terms):
            factors = term.factors + (None,) * (2 - self.space.n_modes)
            for fac, ids, f, d in ((fac1, id1, factors[0], dims[0]), (fac2, id2, factors[1], dims[1])):
                if f is None:
                    ids[k] = 1
                    fac[k] = np.eye(d)
                else:
                    fac[k] = f
        table = drives.coefficient_table([t.coeff for t in self.terms])
        return table, fac1, id1, fac2, id2
