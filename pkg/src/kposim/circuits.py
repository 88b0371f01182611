"""KPO circuit parameters, conversions, and Hamiltonian builders.

Units: energies are stored as angular frequencies (E/hbar) in rad/ns and times
in ns. Use :func:`ghz` / :func:`mhz` to convert ordinary frequencies (E/h).
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import drives
from .drives import Tone
from .fock import (HilbertSpace, OperatorMatrix, charge_phase_scales, hermitian_function,
                   lowering_matrix)
from .hamiltonian import DRIVE, GATE, STATIC, TimeDependentHamiltonian, local_term, product_term

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
TRANSMON_WARN = 0.05
SMALL_PUMP_WARN = 0.1
# extra Fock levels used when building functions of the phase operator
PHASE_PADDING = 40


def ghz(f: float) -> float:
    """Ordinary frequency in GHz -> angular frequency in rad/ns."""
    return TWO_PI * f


def mhz(f: float) -> float:
    return TWO_PI * f * 1e-3


def to_ghz(omega: float) -> float:
    return omega / TWO_PI


class CircuitError(ValueError):
    """Inconsistent or infeasible circuit parameters."""


class CalibrationError(RuntimeError):
    """The single-photon resonance could not be identified unambiguously."""


@dataclass(frozen=True)
class KpoParams:
    E_C: float
    E_J: float
    N: int
    theta0: float = math.pi / 4

    def __post_init__(self):
        if self.E_C <= 0:
            raise CircuitError("E_C must be positive")
        if self.N < 1:
            raise CircuitError("N must be >= 1")
        if not 0 <= self.theta0 < math.pi / 2:
            raise CircuitError("theta0 must lie in [0, pi/2)")
        if self.EJ_eff <= 0:
            raise CircuitError("effective Josephson energy must be positive")
        if self.transmon_ratio > TRANSMON_WARN:
            warnings.warn(f"E_C/E_J_eff = {self.transmon_ratio:.3f} is outside the transmon regime",
                          stacklevel=3)

    @property
    def EJ_eff(self) -> float:
        return self.E_J * math.cos(self.theta0)

    @property
    def transmon_ratio(self) -> float:
        return self.E_C / self.EJ_eff

    @property
    def omega(self) -> float:
        return omega_from_circuit(self)

    @property
    def kerr(self) -> float:
        return self.E_C / self.N ** 2

    @classmethod
    def from_omega(cls, omega: float, E_C: float, N: int, theta0: float = math.pi / 4) -> "KpoParams":
        return cls(E_C, ej_from_omega(omega, E_C, N, theta0), N, theta0)


@dataclass(frozen=True)
class PumpTone:
    delta: float
    omega_p: float
    phase: float = 0.0

    def __post_init__(self):
        if self.delta < 0:
            raise CircuitError("pump amplitude must be non-negative")
        if self.delta > SMALL_PUMP_WARN:
            warnings.warn(f"pump amplitude {self.delta} is not small", stacklevel=3)


@dataclass(frozen=True)
class GatePulseParams:
    p_g0: float
    T_g: float
    beta: float = 3.0
    kind: str = "sum"
    carrier: float | None = None
    phase: float = 0.0

    def __post_init__(self):
        if self.p_g0 < 0:
            raise CircuitError("p_g0 must be non-negative")
        if self.T_g <= 0 or self.beta <= 0:
            raise CircuitError("T_g and beta must be positive")
        if self.kind not in ("sum", "difference"):
            raise CircuitError(f"unknown drive kind {self.kind!r}")

    @property
    def envelope(self) -> drives.Envelope:
        return drives.pulse(self.T_g, self.beta)

    def with_peak(self, p_g0: float) -> "GatePulseParams":
        return replace(self, p_g0=p_g0)


@dataclass(frozen=True)
class SimpleModelParams:
    """Rotating-frame model: detuning, Kerr, pump, coupling, KPO1-KPO2 detuning."""

    K: float
    P: float
    g: float = 0.0
    Delta12: float = 0.0
    Delta: float = 0.0

    def __post_init__(self):
        if self.K <= 0:
            raise CircuitError("K must be positive")
        if self.P < 0:
            raise CircuitError("P must be non-negative")

    @property
    def alpha(self) -> float:
        return math.sqrt(self.P / self.K)


@dataclass(frozen=True)
class CouplingParams:
    """Coupling capacitor, given either as ``E_C0`` or as a target ``g``."""

    E_C0: float | None = None
    g: float | None = None

    def __post_init__(self):
        if (self.E_C0 is None) == (self.g is None):
            raise CircuitError("give exactly one of E_C0 and g")

    def resolve(self, p1: KpoParams, p2: KpoParams) -> tuple[float, float]:
        """Return ``(E_C0, g)``."""
        if self.E_C0 is not None:
            return self.E_C0, g_from_ec0(self.E_C0, p1, p2)
        e_c0 = ec0_from_g(self.g, p1, p2)
        return e_c0, self.g


# --- conversions ---------------------------------------------------------------

def omega_from_circuit(params: KpoParams) -> float:
    return math.sqrt(8.0 * params.E_C * params.EJ_eff / params.N)


def ej_from_omega(omega: float, E_C: float, N: int, theta0: float) -> float:
    if omega <= 0 or E_C <= 0 or N < 1:
        raise CircuitError("omega, E_C and N must be positive")
    c = math.cos(theta0)
    if c <= 1e-15:
        raise CircuitError("theta0 = pi/2 leaves no Josephson energy")
    return N * omega ** 2 / (8.0 * E_C * c)


def pump_scale(params: KpoParams) -> float:
    """``dP/d delta``: pump amplitude per unit flux modulation."""
    return math.sqrt(params.E_C * params.EJ_eff / (2.0 * params.N)) * math.tan(params.theta0)


def kerr_and_pump(params: KpoParams, tone: PumpTone | float) -> tuple[float, float]:
    delta = tone.delta if isinstance(tone, PumpTone) else float(tone)
    return params.kerr, delta * pump_scale(params)


def delta_for_pump(P_target: float, params: KpoParams) -> float:
    if P_target < 0:
        raise CircuitError("pump amplitude must be non-negative")
    if P_target == 0:
        return 0.0
    scale = pump_scale(params)
    if scale == 0:
        raise CircuitError("theta0 = 0 cannot be pumped")
    return P_target / scale


def _coupling_geometry(p1: KpoParams, p2: KpoParams) -> float:
    return (p1.EJ_eff * p2.EJ_eff / (4.0 * p1.N * p2.N * p1.E_C * p2.E_C)) ** 0.25


def g_from_ec0(E_C0: float, p1: KpoParams, p2: KpoParams) -> float:
    if E_C0 <= 0:
        raise CircuitError("E_C0 must be positive")
    total = E_C0 + p1.E_C + p2.E_C
    return 4.0 * p1.E_C * p2.E_C / total * _coupling_geometry(p1, p2)


def ec0_from_g(g_target: float, p1: KpoParams, p2: KpoParams) -> float:
    if g_target <= 0:
        raise CircuitError("target coupling must be positive")
    total = 4.0 * p1.E_C * p2.E_C * _coupling_geometry(p1, p2) / g_target
    e_c0 = total - p1.E_C - p2.E_C
    if e_c0 <= 0:
        raise CircuitError(f"coupling g={g_target} is too strong for these KPOs")
    return e_c0


def coupling_coefficient(E_C0: float, p1: KpoParams, p2: KpoParams) -> float:
    """Prefactor of the charge-charge interaction ``n1 n2``."""
    return 16.0 * p1.E_C * p2.E_C / (E_C0 + p1.E_C + p2.E_C)


def renormalized_pair(p1: KpoParams, p2: KpoParams, E_C0: float) -> tuple[KpoParams, KpoParams]:
    """KPOs with charging energies dressed by the coupling capacitor."""
    total = E_C0 + p1.E_C + p2.E_C
    return (replace(p1, E_C=p1.E_C * (E_C0 + p2.E_C) / total),
            replace(p2, E_C=p2.E_C * (E_C0 + p1.E_C) / total))


# --- pulses ----------------------------------------------------------------------

def pulse_envelope(t: float, gp: GatePulseParams) -> float:
    """Gate amplitude ``p_g(t)`` of the rotating-frame model."""
    return gp.p_g0 * drives.tanh_pulse(t, gp.T_g, gp.beta)


def gate_delta_per_amplitude(params: KpoParams, kind: str) -> float:
    """Flux modulation per unit of simple-model gate amplitude ``p_g``.

    A tone ``delta cos(w t)`` in the Josephson term of KPO1 contributes
    ``S delta cos(w t) (a + a†)^2`` with ``S = pump_scale``. The sum drive
    keeps the ``a^2`` part, ``(S delta / 2) a^2``, which matches
    ``(p_g / 2) a^2`` for ``delta = p_g / S``. The difference drive keeps
    ``2 S delta cos(w t) a†a``, which matches ``(p_g / 2) cos(w t) a†a`` for
    ``delta = p_g / (4 S)``.
    """
    if kind == "sum":
        return 1.0 / pump_scale(params)
    if kind == "difference":
        return 0.25 / pump_scale(params)
    raise CircuitError(f"unknown gate drive kind {kind!r}")


def delta_g_envelope(t: float, gp: GatePulseParams, params1: KpoParams) -> float:
    """Flux-modulation amplitude of the gate tone that realizes ``p_g(t)``."""
    if gp.p_g0 == 0:
        return 0.0
    return pulse_envelope(t, gp) * gate_delta_per_amplitude(params1, gp.kind)


# --- simple (rotating-frame) models --------------------------------------------------

def _kerr_pump_local(dim: int, K: float, P: float, Delta: float = 0.0):
    a = lowering_matrix(dim)
    ad = a.conj().T
    kerr = -(K / 2.0) * (ad @ ad @ a @ a)
    squeeze = 0.5 * (ad @ ad + a @ a)
    number = ad @ a
    return kerr + Delta * number, squeeze


def build_simple_single(sp: SimpleModelParams, dim: int,
                        pump_envelope: drives.Envelope = drives.ONE) -> TimeDependentHamiltonian:
    """``Delta a†a - K/2 a†²a² + P env(t)/2 (a†² + a²)``."""
    space = HilbertSpace((dim,))
    static, squeeze = _kerr_pump_local(dim, sp.K, sp.P, sp.Delta)
    terms = [local_term(space, 0, static, drives.constant(1.0), STATIC, "kerr")]
    if sp.P:
        coeff = (drives.constant(sp.P) if pump_envelope.kind == drives.ENV_ONE
                 else drives.phasor(sp.P, 0.0, pump_envelope))
        terms.append(local_term(space, 0, squeeze, coeff, DRIVE, "pump"))
    return TimeDependentHamiltonian(space, terms, {"model": "simple", "modes": 1})


def _simple_two_base(sp: SimpleModelParams, space: HilbertSpace):
    terms = []
    for mode, d in enumerate(space.mode_dims):
        static, squeeze = _kerr_pump_local(d, sp.K, sp.P, sp.Delta)
        terms.append(local_term(space, mode, static + sp.P * squeeze, drives.constant(1.0),
                                STATIC, f"kpo{mode + 1}"))
    a1, a2 = (lowering_matrix(d) for d in space.mode_dims)
    if sp.g:
        terms.append(product_term(space, [a1, a2.conj().T], drives.phasor(sp.g, -sp.Delta12),
                                  STATIC, "coupling"))
        terms.append(product_term(space, [a1.conj().T, a2], drives.phasor(sp.g, sp.Delta12),
                                  STATIC, "coupling+"))
    return terms, a1


def build_simple_two(sp: SimpleModelParams, gp: GatePulseParams,
                     space: HilbertSpace) -> TimeDependentHamiltonian:
    """Two coupled KPOs with the sum-frequency gate on KPO1 (rotating frame)."""
    if gp.kind != "sum":
        raise CircuitError("build_simple_two expects a sum-frequency gate")
    if space.n_modes != 2:
        raise CircuitError("two-KPO models need a two-mode space")
    terms, a1 = _simple_two_base(sp, space)
    if gp.p_g0:
        env = gp.envelope
        a1sq = a1 @ a1
        terms.append(product_term(space, [a1sq, None],
                                  drives.phasor(0.5 * gp.p_g0, -sp.Delta12, env), GATE, "gate"))
        terms.append(product_term(space, [a1sq.conj().T, None],
                                  drives.phasor(0.5 * gp.p_g0, sp.Delta12, env), GATE, "gate+"))
    return TimeDependentHamiltonian(space, terms, {"model": "simple", "drive": "sum"})


def build_simple_two_diff(sp: SimpleModelParams, gp: GatePulseParams,
                          space: HilbertSpace) -> TimeDependentHamiltonian:
    """Difference-frequency variant: gate term ``p_g(t)/2 cos(Delta12 t) a1†a1``."""
    if gp.kind != "difference":
        raise CircuitError("build_simple_two_diff expects a difference-frequency gate")
    if space.n_modes != 2:
        raise CircuitError("two-KPO models need a two-mode space")
    terms, a1 = _simple_two_base(sp, space)
    if gp.p_g0:
        terms.append(product_term(space, [a1.conj().T @ a1, None],
                                  drives.cosine(0.5 * gp.p_g0, sp.Delta12, gp.envelope), GATE,
                                  "gate"))
    return TimeDependentHamiltonian(space, terms, {"model": "simple", "drive": "difference"})


def simple_params_from_circuit(p1: KpoParams, P: float, g: float = 0.0, Delta12: float = 0.0,
                               Delta: float = 0.0) -> SimpleModelParams:
    return SimpleModelParams(K=p1.kerr, P=P, g=g, Delta12=Delta12, Delta=Delta)


# --- superconducting-circuit (lab-frame) models ---------------------------------------

@dataclass(frozen=True, eq=False)
class TransmonBlocks:
    """Single-mode matrices of one KPO, truncated from a padded space."""

    a: np.ndarray
    number: np.ndarray
    charge: np.ndarray      # Cooper-pair number operator n
    phase_sq: np.ndarray    # phi**2
    cos_shift: np.ndarray   # cos(phi/N) - 1

    @property
    def dim(self) -> int:
        return self.a.shape[0]


def transmon_blocks(params: KpoParams, dim: int, padding: int = PHASE_PADDING) -> TransmonBlocks:
    """Build the phase-dependent matrices in ``dim + padding`` levels, then truncate.

    Functions of the truncated phase operator are inaccurate near the cutoff;
    padding keeps the retained block equal to the truncation of the exact
    operator.
    """
    big = dim + padding
    s_n, s_phi = charge_phase_scales(params.E_C, params.EJ_eff, params.N)
    a_big = lowering_matrix(big)
    x_big = (a_big + a_big.conj().T).real
    phi = s_phi * x_big
    cos_shift = hermitian_function(phi, lambda lam: np.cos(lam / params.N) - 1.0)
    phi_sq = phi @ phi
    a = lowering_matrix(dim)
    charge = 1j * s_n * (a.conj().T - a)
    return TransmonBlocks(a=a, number=np.diag(np.arange(dim, dtype=complex)), charge=charge,
                          phase_sq=phi_sq[:dim, :dim].astype(complex),
                          cos_shift=np.ascontiguousarray(cos_shift[:dim, :dim], dtype=complex))


def sc_static_local(params: KpoParams, blocks: TransmonBlocks) -> np.ndarray:
    """Undriven single-KPO Hamiltonian (constant energy offsets dropped)."""
    return (params.omega * blocks.number
            - (params.EJ_eff / (2.0 * params.N)) * blocks.phase_sq
            - params.N * params.EJ_eff * blocks.cos_shift)


def _josephson_coefficient(params: KpoParams, pump: Tone, gate: Tone = drives.SILENT):
    # -N E_J cos(theta0 - m(t)) multiplies cos(phi/N) - 1; the identity part is
    # a c-number and only contributes a global phase
    return drives.josephson(-params.N * params.E_J, params.theta0, pump, gate)


def build_sc_single(params: KpoParams, tone: PumpTone, dim: int, gate: Tone | None = None,
                    pump_envelope: drives.Envelope = drives.ONE,
                    padding: int = PHASE_PADDING) -> TimeDependentHamiltonian:
    """Lab-frame single KPO with flux drive ``theta0 - delta env(t) cos(omega_p t)``."""
    space = HilbertSpace((dim,))
    blocks = transmon_blocks(params, dim, padding)
    static = (params.omega * blocks.number
              - (params.EJ_eff / (2.0 * params.N)) * blocks.phase_sq)
    pump = Tone(tone.delta, tone.omega_p, pump_envelope, tone.phase)
    role = GATE if gate is not None else DRIVE
    terms = [local_term(space, 0, static, drives.constant(1.0), STATIC, "oscillator"),
             local_term(space, 0, blocks.cos_shift,
                        _josephson_coefficient(params, pump, gate or drives.SILENT), role,
                        "josephson")]
    return TimeDependentHamiltonian(space, terms, {"model": "sc", "modes": 1})


def build_sc_static(params: KpoParams, dim: int, padding: int = PHASE_PADDING) -> OperatorMatrix:
    space = HilbertSpace((dim,))
    blocks = transmon_blocks(params, dim, padding)
    return OperatorMatrix(space, sc_static_local(params, blocks), hermitian=True)


def calibrate_resonance(H: OperatorMatrix, mode: int = 0) -> float:
    """Single-photon transition frequency of the dressed |0> -> |1> pair.

    The dressed states are the eigenvectors with the largest overlap with the
    Fock states |0> and |1> of ``mode`` (all other modes in vacuum).
    """
    if not H.is_hermitian():
        raise CalibrationError("calibration needs a Hermitian static Hamiltonian")
    space = H.space
    evals, vecs = np.linalg.eigh(H.entries)
    idx = []
    for n in (0, 1):
        occ = [0] * space.n_modes
        occ[mode] = n
        weights = np.abs(vecs[np.ravel_multi_index(occ, space.mode_dims)]) ** 2
        best = int(np.argmax(weights))
        if weights[best] < 0.5 or best in idx:
            raise CalibrationError(f"no eigenstate dominated by Fock state |{n}> "
                                   f"(best weight {weights[best]:.3f}); spectrum degenerate?")
        idx.append(best)
    e0, e1 = evals[idx[0]], evals[idx[1]]
    return float(e1 - e0)


def calibrate_kpo(params: KpoParams, dim: int, mode: str = "sc_static") -> float:
    """Resonance ``omega~`` used to set the pump to ``2 omega~``."""
    if mode == "sc_static":
        return calibrate_resonance(build_sc_static(params, dim))
    if mode == "harmonic":
        return params.omega
    raise CircuitError(f"unknown resonance mode {mode!r}")


@dataclass(frozen=True)
class ScTwoSetup:
    """Resolved parameters of a two-KPO lab-frame run."""

    bare: tuple[KpoParams, KpoParams]
    dressed: tuple[KpoParams, KpoParams]
    E_C0: float
    g: float
    omega_tilde: tuple[float, float]
    pumps: tuple[PumpTone, PumpTone]
    carrier: float

    def summary(self) -> dict:
        return {
            "E_C0_GHz": to_ghz(self.E_C0),
            "g_MHz": to_ghz(self.g) * 1e3,
            "V_MHz": to_ghz(coupling_coefficient(self.E_C0, *self.bare)) * 1e3,
            "omega_GHz": [to_ghz(p.omega) for p in self.dressed],
            "omega_tilde_GHz": list(map(to_ghz, self.omega_tilde)),
            "E_C_dressed_GHz": [to_ghz(p.E_C) for p in self.dressed],
            "K_MHz": [to_ghz(p.kerr) * 1e3 for p in self.dressed],
            "delta_p": [t.delta for t in self.pumps],
            "omega_p_GHz": [to_ghz(t.omega_p) for t in self.pumps],
            "carrier_GHz": to_ghz(self.carrier),
        }


def resolve_sc_two(p1: KpoParams, p2: KpoParams, coupling: CouplingParams, P_over_K: float,
                   kind: str = "sum", dim_cal: int = 40, resonance_mode: str = "sc_static",
                   pump_freqs: tuple[float, float] | None = None) -> ScTwoSetup:
    """Derive coupler, dressed KPOs, calibrated pump tones and gate carrier."""
    E_C0, g = coupling.resolve(p1, p2)
    d1, d2 = renormalized_pair(p1, p2, E_C0)
    if pump_freqs is None:
        w1 = calibrate_kpo(d1, dim_cal, resonance_mode)
        w2 = calibrate_kpo(d2, dim_cal, resonance_mode)
    else:
        w1, w2 = pump_freqs[0] / 2, pump_freqs[1] / 2
    tones = (PumpTone(delta_for_pump(P_over_K * d1.kerr, d1), 2 * w1),
             PumpTone(delta_for_pump(P_over_K * d2.kerr, d2), 2 * w2))
    carrier = w1 + w2 if kind == "sum" else abs(w1 - w2)
    return ScTwoSetup((p1, p2), (d1, d2), E_C0, g, (w1, w2), tones, carrier)


def build_sc_two(setup: ScTwoSetup, gp: GatePulseParams, space: HilbertSpace,
                 padding: int = PHASE_PADDING) -> TimeDependentHamiltonian:
    """Lab-frame two-KPO circuit with charge coupling and the gate tone on KPO1.

    Kinetic terms use the dressed charging energies; the coupling prefactor
    uses the bare ones.
    """
    if space.n_modes != 2:
        raise CircuitError("two-KPO models need a two-mode space")
    blocks = [transmon_blocks(p, d, padding) for p, d in zip(setup.dressed, space.mode_dims)]
    terms = []
    carrier = gp.carrier if gp.carrier is not None else setup.carrier
    for mode, (p, b, tone) in enumerate(zip(setup.dressed, blocks, setup.pumps)):
        static = p.omega * b.number - (p.EJ_eff / (2.0 * p.N)) * b.phase_sq
        terms.append(local_term(space, mode, static, drives.constant(1.0), STATIC,
                                f"oscillator{mode + 1}"))
        pump = Tone(tone.delta, tone.omega_p, drives.ONE, tone.phase)
        gate = drives.SILENT
        role = DRIVE
        if mode == 0 and gp.p_g0:
            gate = Tone(gp.p_g0 * gate_delta_per_amplitude(p, gp.kind), carrier,
                        gp.envelope, gp.phase)
            role = GATE
        terms.append(local_term(space, mode, b.cos_shift, _josephson_coefficient(p, pump, gate),
                                role, f"josephson{mode + 1}"))
    v = coupling_coefficient(setup.E_C0, *setup.bare)
    terms.append(product_term(space, [blocks[0].charge, blocks[1].charge], drives.constant(v),
                              STATIC, "charge-coupling"))
    meta = {"model": "sc", "drive": gp.kind, "omega_max": max(carrier, *(t.omega_p for t in setup.pumps))}
    return TimeDependentHamiltonian(space, terms, meta)
