"""R_zz gate experiment: state preparation, reference frame, angle and fidelity.

The gate is read out in the frame of the gate-free evolution ``U0(T_g)``:
``Psi_even = U0 psi_even`` and ``Psi_odd = U0 psi_odd``. The rotation angle is
the relative phase the gate pulse adds between the two branches.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from . import circuits
from .circuits import (CouplingParams, GatePulseParams, KpoParams, SimpleModelParams, ghz, mhz)
from .dynamics import (SolverSettings, lab_frame_settings, lindblad_propagate,
                       reference_propagate, schrodinger_propagate)
from .fock import (DensityMatrix, HilbertSpace, StateVector, cat_pair_states, inner_product,
                   recommended_dim)
from .hamiltonian import TimeDependentHamiltonian

log = logging.getLogger(__name__)

DEGENERATE_AMPLITUDE = 1e-6


class DegenerateProjectionError(ArithmeticError):
    """The even-branch projection vanishes, so no angle can be defined."""


def wrap_angle(x: float) -> float:
    """Wrap to (-pi, pi]; -pi maps to pi."""
    y = math.remainder(x, 2 * math.pi)
    return math.pi if y <= -math.pi else y


@dataclass(frozen=True)
class GateOutcome:
    theta: float | None
    fidelity: float
    alpha1: complex
    alpha2: complex
    leakage: float
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def degenerate(self) -> bool:
        return self.theta is None

    @property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity


# --- states ----------------------------------------------------------------------

def prepare_initial(space: HilbertSpace, alpha: float) -> StateVector:
    """``N0 (psi_even + psi_odd)``, normalized with the exact Gram matrix."""
    even, odd = cat_pair_states(space, alpha)
    return StateVector(space, even.amplitudes + odd.amplitudes)


def orthonormalize_pair(first: StateVector, second: StateVector) -> tuple[StateVector, StateVector]:
    """Gram-Schmidt: keep the direction of ``first``, orthogonalize ``second``."""
    e = first.amplitudes / first.norm
    o = second.amplitudes - np.vdot(e, second.amplitudes) * e
    if np.linalg.norm(o) < 1e-12:
        raise DegenerateProjectionError("reference states are linearly dependent")
    return StateVector(first.space, e), StateVector(first.space, o)


def ideal_target(theta: float, Psi_even: StateVector, Psi_odd: StateVector) -> StateVector:
    """``N1 (Psi_even + exp(i theta) Psi_odd)``."""
    return StateVector(Psi_even.space, Psi_even.amplitudes + np.exp(1j * theta) * Psi_odd.amplitudes)


def extract_angle_and_fidelity(psi: StateVector, Psi_even: StateVector, Psi_odd: StateVector,
                               orthonormalize: bool = True) -> GateOutcome:
    """Project the final state on the reference pair.

    The projections use the Gram-Schmidt orthonormalized pair, so that
    ``|alpha1|^2 + |alpha2|^2 + leakage = 1``; ``theta = arg alpha2 - arg alpha1``.
    The fidelity is taken against :func:`ideal_target` built from the raw
    pair. A vanishing ``alpha1`` yields ``theta = None`` and a NaN fidelity.
    """
    E, O = orthonormalize_pair(Psi_even, Psi_odd) if orthonormalize else (Psi_even, Psi_odd)
    a1, a2 = inner_product(E, psi), inner_product(O, psi)
    leakage = 1.0 - abs(a1) ** 2 - abs(a2) ** 2
    overlap = abs(inner_product(E, O))
    diag = {"ref_overlap": overlap}
    if abs(a1) < DEGENERATE_AMPLITUDE:
        return GateOutcome(None, float("nan"), a1, a2, leakage, diag)
    theta = wrap_angle(np.angle(a2) - np.angle(a1))
    ideal = ideal_target(theta, Psi_even, Psi_odd)
    fid = abs(inner_product(ideal, psi)) ** 2
    return GateOutcome(theta, float(min(fid, 1.0 + 1e-9)), a1, a2, leakage, diag)


def fidelity_mixed(rho: DensityMatrix, ideal: StateVector) -> float:
    """``<ideal|rho|ideal>``, clamped to [0, 1 + 1e-9]."""
    v = ideal.amplitudes
    f = float(np.real(np.vdot(v, rho.entries @ v)))
    return min(max(f, 0.0), 1.0 + 1e-9)


def extract_mixed(rho: DensityMatrix, Psi_even: StateVector, Psi_odd: StateVector) -> GateOutcome:
    """Mixed-state readout; the angle is the phase of ``<Psi_odd|rho|Psi_even>``.

    For a pure state this coherence is ``alpha2 conj(alpha1)``, so the angle
    reduces to the pure-state definition.
    """
    E, O = orthonormalize_pair(Psi_even, Psi_odd)
    e, o = E.amplitudes, O.amplitudes
    p_even = float(np.real(np.vdot(e, rho.entries @ e)))
    p_odd = float(np.real(np.vdot(o, rho.entries @ o)))
    coherence = np.vdot(o, rho.entries @ e)
    leakage = rho.trace - p_even - p_odd
    a1, a2 = complex(math.sqrt(max(p_even, 0.0))), complex(math.sqrt(max(p_odd, 0.0)))
    diag = {"coherence": coherence, "ref_overlap": abs(inner_product(E, O))}
    if abs(coherence) < DEGENERATE_AMPLITUDE ** 2:
        return GateOutcome(None, float("nan"), a1, a2, leakage, diag)
    theta = wrap_angle(float(np.angle(coherence)))
    a2 *= np.exp(1j * theta)
    return GateOutcome(theta, fidelity_mixed(rho, ideal_target(theta, Psi_even, Psi_odd)), a1, a2, leakage, diag)


# --- experiment set-up -------------------------------------------------------------

@dataclass(frozen=True)
class RzzSetup:
    """Two-KPO circuit plus pulse shape and numerical resolution.

    The simple model uses the bare Kerr ``K1`` and ``P = P_over_K K``; the
    circuit model derives everything from the KPO and coupler parameters.
    """

    kpo1: KpoParams
    kpo2: KpoParams
    coupling: CouplingParams
    P_over_K: float = 4.0
    T_g: float = 40.0
    beta: float = 3.0
    dims: tuple[int, int] | None = None
    resonance_mode: str = "sc_static"
    simple_tol: float = 1e-9
    sc_tol: float = 1e-8

    @property
    def K(self) -> float:
        return self.kpo1.kerr

    @property
    def alpha(self) -> float:
        return math.sqrt(self.P_over_K)

    @property
    def space(self) -> HilbertSpace:
        if self.dims is not None:
            return HilbertSpace(tuple(self.dims))
        d = recommended_dim(self.alpha)
        return HilbertSpace((d, d))

    def simple_params(self) -> SimpleModelParams:
        _, g = self.coupling.resolve(self.kpo1, self.kpo2)
        return SimpleModelParams(K=self.K, P=self.P_over_K * self.K, g=g,
                                 Delta12=self.kpo1.omega - self.kpo2.omega)

    def sc_setup(self, kind: str) -> circuits.ScTwoSetup:
        return circuits.resolve_sc_two(self.kpo1, self.kpo2, self.coupling, self.P_over_K, kind,
                                       resonance_mode=self.resonance_mode)

    def pulse(self, p_g0: float, kind: str) -> GatePulseParams:
        return GatePulseParams(p_g0, self.T_g, self.beta, kind)

    def with_dims(self, dims: tuple[int, int]) -> "RzzSetup":
        return replace(self, dims=tuple(dims))


def standard_setup(**overrides) -> RzzSetup:
    """Two identical-E_C KPOs at 10 and 11 GHz, N = 5, coupled with g/2pi = 10 MHz."""
    e_c, n = ghz(0.3), 5
    kpo1 = KpoParams.from_omega(ghz(10.0), e_c, n)
    kpo2 = KpoParams.from_omega(ghz(11.0), e_c, n)
    return replace(RzzSetup(kpo1, kpo2, CouplingParams(g=mhz(10.0))), **overrides)


def build_hamiltonian(model: str, drive: str, setup: RzzSetup, p_g0: float,
                      sc_resolved: circuits.ScTwoSetup | None = None) -> TimeDependentHamiltonian:
    gp = setup.pulse(p_g0, drive)
    space = setup.space
    if model == "simple":
        sp = setup.simple_params()
        if drive == "sum":
            return circuits.build_simple_two(sp, gp, space)
        return circuits.build_simple_two_diff(sp, gp, space)
    if model == "sc":
        return circuits.build_sc_two(sc_resolved or setup.sc_setup(drive), gp, space)
    raise ValueError(f"unknown model {model!r}")


def default_settings(model: str, setup: RzzSetup, H: TimeDependentHamiltonian | None = None,
                     tol: float | None = None) -> SolverSettings:
    if model == "simple":
        t = tol or setup.simple_tol
        return SolverSettings(rel_tol=t, abs_tol=t)
    omega_max = H.meta["omega_max"] if H is not None else 2 * (setup.kpo1.omega + setup.kpo2.omega)
    # DP5 slowly damps the fast lab-frame phases; renormalizing removes that bias
    return lab_frame_settings(omega_max, tol or setup.sc_tol, renormalize=True)


@dataclass(frozen=True)
class ReferencePair:
    """Gate-free evolved cat pair; reusable across a p_g0 sweep."""

    Psi_even: StateVector
    Psi_odd: StateVector
    initial: StateVector
    raw_overlap: float


def reference_pair(model: str, drive: str, setup: RzzSetup, settings: SolverSettings | None = None,
                   sc_resolved: circuits.ScTwoSetup | None = None) -> ReferencePair:
    H = build_hamiltonian(model, drive, setup, 0.0, sc_resolved)
    settings = settings or default_settings(model, setup, H)
    space = setup.space
    even, odd = cat_pair_states(space, setup.alpha)
    Pe, Po = reference_propagate(H, [even, odd], setup.T_g, settings)
    return ReferencePair(Pe, Po, prepare_initial(space, setup.alpha),
                         abs(inner_product(even, odd)))


def run_rzz(model: str, drive: str, setup: RzzSetup, p_g0: float, gamma: float = 0.0,
            settings: SolverSettings | None = None, reference: ReferencePair | None = None,
            sc_resolved: circuits.ScTwoSetup | None = None) -> GateOutcome:
    """Run one gate and read it out against the gate-free reference.

    ``p_g0`` is the peak gate amplitude in rad/ns and ``gamma`` the
    single-photon loss rate (1/T1) applied to both KPOs.
    """
    if drive not in ("sum", "difference"):
        raise ValueError(f"unknown drive {drive!r}")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if model == "sc" and sc_resolved is None:
        sc_resolved = setup.sc_setup(drive)
    H = build_hamiltonian(model, drive, setup, p_g0, sc_resolved)
    settings = settings or default_settings(model, setup, H)
    start = time.perf_counter()
    if reference is None:
        reference = reference_pair(model, drive, setup, settings, sc_resolved)
    psi0 = reference.initial
    if gamma == 0:
        final, traj = schrodinger_propagate(H, psi0, 0.0, setup.T_g, settings)
        outcome = extract_angle_and_fidelity(final, reference.Psi_even, reference.Psi_odd)
    else:
        rho, traj = lindblad_propagate(H, psi0, gamma, 0.0, setup.T_g, settings)
        outcome = extract_mixed(rho, reference.Psi_even, reference.Psi_odd)
    diag = dict(outcome.diagnostics)
    diag.update(traj.diagnostics)
    diag.update(model=model, drive=drive, p_g0=p_g0, gamma=gamma, dims=setup.space.mode_dims,
                wall_s=time.perf_counter() - start, raw_pair_overlap=reference.raw_overlap)
    return replace(outcome, diagnostics=diag)


def peak_for_angle(theta_of_peak, target: float, lo: float, hi: float, xtol: float) -> float:
    """Bisect ``theta_of_peak(p) = target`` on ``[lo, hi]`` (Theta increases with p)."""
    try:
        return brentq(lambda p: theta_of_peak(p) - target, lo, hi, xtol=xtol)
    except ValueError as exc:
        raise ValueError(f"target angle {target} is not bracketed by [{lo}, {hi}]") from exc
