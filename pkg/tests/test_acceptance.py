"""Acceptance criteria, each run at its stated tolerance.

Every test records a one-line verdict that is printed in the pytest terminal
summary. Long runs carry the ``slow`` marker; deselect them with
``-m "not slow"``.
"""
import math

import numpy as np
import pytest

from kposim import circuits, drives, fock, gate
from kposim.circuits import KpoParams, SimpleModelParams, ghz, mhz
from kposim.dynamics import SolverSettings, lindblad_propagate, schrodinger_propagate
from kposim.experiments import (LOSS_DIM, LOSS_TOL, RampSpec, certify_gate, loss_sweep,
                                photon_ramp, rzz_sweep)
from kposim.fock import HilbertSpace, StateVector
from kposim.hamiltonian import STATIC, TimeDependentHamiltonian, local_term

HALF_PI = math.pi / 2
F_BOUND = 0.999


def sweep_verdict(result) -> tuple[bool, str]:
    d = result.derived
    min_F = d["min_F_theta_le_half_pi"]
    passed = d["spans_half_pi"] and min_F is not None and min_F > F_BOUND
    return passed, (f"Theta_max={d['theta_max_rad']:.5f} (pi/2={HALF_PI:.5f}), "
                    f"min F over Theta<=pi/2 = {min_F:.6f}")


# --- 1: photon ramp ---------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_1_photon_ramp(acceptance):
    kpo = KpoParams.from_omega(ghz(10.0), mhz(300.0), 5, math.pi / 4)
    spec = RampSpec(kpo, 0.05, T=2000.0)
    result = photon_ramp(spec, ("simple", "sc"), workers=2, certify=False)
    target = result.derived["P_over_K"]
    n_simple, n_sc = result.column("n_simple"), result.column("n_sc")
    worst_gap = float(np.max(np.abs(n_simple - n_sc)))
    ok_simple = abs(n_simple[-1] - target) <= 0.5
    ok_sc = abs(n_sc[-1] - target) <= 0.5
    ok_gap = worst_gap <= 0.05 * n_simple[-1]
    acceptance(1, ok_simple and ok_sc and ok_gap,
               f"P/K={target:.3f}, n_simple(T)={n_simple[-1]:.3f}, n_sc(T)={n_sc[-1]:.3f}, "
               f"max|n_simple-n_sc|={worst_gap:.3f} ({100 * worst_gap / n_simple[-1]:.1f}% "
               f"of final)")
    assert ok_simple and ok_sc and ok_gap


# --- 2-4: Rzz sweeps ----------------------------------------------------------------------

def test_criterion_2_simple_sum_sweep(acceptance, setup):
    result = rzz_sweep("simple", "sum", setup, np.linspace(0.0, 5.0, 51), workers=2)
    passed, detail = sweep_verdict(result)
    cert = result.convergence
    passed = passed and cert["passed"]
    acceptance(2, passed, f"{detail}, certificate dF={max(cert['tol_halved_delta'], cert['dim_bumped_delta']):.1e}")
    assert passed


@pytest.mark.slow
def test_criterion_3_sc_sum_sweep(acceptance, setup):
    result = rzz_sweep("sc", "sum", setup, np.linspace(0.0, 5.0, 21), workers=2,
                       certify=False)
    passed, detail = sweep_verdict(result)
    acceptance(3, passed, f"21 points on [0, 5K]: {detail}")
    assert passed


@pytest.mark.slow
def test_criterion_4_difference_drive(acceptance, setup):
    grid = np.linspace(0.0, 20.0, 21)
    simple = rzz_sweep("simple", "difference", setup, np.linspace(0.0, 20.0, 81), workers=2)
    sc = rzz_sweep("sc", "difference", setup, grid, workers=2, certify=False)
    ok_simple, d_simple = sweep_verdict(simple)
    ok_sc, d_sc = sweep_verdict(sc)
    passed = ok_simple and ok_sc and simple.convergence["passed"]
    acceptance(4, passed, f"simple: {d_simple}; sc: {d_sc}")
    assert passed


# --- 5: loss study ------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_5_loss_study(acceptance, setup):
    T1 = [15.5, 250.0, 500.0 / 1.5, 500.0, 750.0, 1000.0]
    result = loss_sweep(setup.with_dims((LOSS_DIM, LOSS_DIM)), T1, workers=2,
                        settings=SolverSettings(rel_tol=LOSS_TOL, abs_tol=LOSS_TOL))
    infid = dict(zip(result.column("T1_us"), result.column("infidelity")))
    at_15 = infid[15.5]
    crossing = result.derived["T1_at_0p1_percent_us"]
    ok_15 = abs(at_15 - 0.02) <= 0.005
    ok_cross = crossing is not None and 500.0 / 1.5 <= crossing <= 500.0 * 1.5
    passed = ok_15 and ok_cross and result.derived["monotone_decreasing"]
    acceptance(5, passed, f"p_g0={result.derived['p_g0_over_K']:.4f}K, "
               f"1-F(15.5 us)={at_15:.5f}, 1-F(lossless)={infid[np.inf]:.2e}, "
               f"0.1% crossing at T1={crossing if crossing is None else round(crossing, 1)} us")
    assert passed


# --- 6: property suite -----------------------------------------------------------------------

def _commutator_defect() -> float:
    worst = 0.0
    for d in (2, 5, 13):
        s = HilbertSpace((d,))
        a, ad = fock.annihilation(s), fock.creation(s)
        expected = np.eye(d)
        expected[-1, -1] = -(d - 1)
        worst = max(worst, np.max(np.abs((a @ ad - ad @ a).entries - expected)))
    return worst


def _builders(setup):
    sp = setup.simple_params()
    space = HilbertSpace((8, 8))
    yield circuits.build_simple_single(SimpleModelParams(K=sp.K, P=sp.P), 20)
    yield circuits.build_simple_single(SimpleModelParams(K=sp.K, P=sp.P), 20, drives.ramp(40.0))
    yield circuits.build_simple_two(sp, setup.pulse(5 * sp.K, "sum"), space)
    yield circuits.build_simple_two_diff(sp, setup.pulse(20 * sp.K, "difference"), space)
    yield circuits.build_sc_single(setup.kpo1, circuits.PumpTone(0.0192, 2 * setup.kpo1.omega), 20)
    for kind in ("sum", "difference"):
        yield circuits.build_sc_two(setup.sc_setup(kind), setup.pulse(5 * sp.K, kind), space)


def _hermiticity(setup) -> float:
    grid = np.linspace(0.0, setup.T_g, 201)
    return max(H.hermiticity_error(t) for H in _builders(setup) for t in grid)


def _cat_residual() -> float:
    sp = SimpleModelParams(K=1.0, P=4.0)
    H = circuits.build_simple_single(sp, 30).static_operator()
    psi = fock.coherent_state(H.space, 2.0)
    return float(np.linalg.norm(H.entries @ psi.amplitudes - sp.P ** 2 / 2 * psi.amplitudes))


def _damped_decay() -> float:
    space = HilbertSpace((25,))
    zero = local_term(space, 0, np.zeros((25, 25), complex), drives.constant(0.0), STATIC, "zero")
    H = TimeDependentHamiltonian(space, [zero])
    alpha, g = 2.0, 0.1
    _, traj = lindblad_propagate(H, fock.coherent_state(space, alpha), g, 0.0, 10.0,
                                 SolverSettings(rel_tol=1e-10, abs_tol=1e-10),
                                 observables={"n": fock.number(space)}, n_samples=11)
    return float(np.max(np.abs(traj.observables["n"] - alpha ** 2 * np.exp(-g * traj.times))))


def _lindblad_equivalence() -> float:
    setup = gate.standard_setup(dims=(10, 10))
    H = gate.build_hamiltonian("simple", "sum", setup, 5 * setup.K)
    psi0 = gate.prepare_initial(setup.space, setup.alpha)
    settings = SolverSettings(rel_tol=1e-12, abs_tol=1e-12)
    psi, _ = schrodinger_propagate(H, psi0, 0.0, setup.T_g, settings)
    rho, _ = lindblad_propagate(H, psi0, 0.0, 0.0, setup.T_g, settings)
    return 1.0 - float(np.real(np.vdot(psi.amplitudes, rho.entries @ psi.amplitudes)))


def _round_trip() -> float:
    worst = 0.0
    for w, ec, n, th in [(10.0, 0.3, 5, math.pi / 4), (11.0, 0.3, 5, math.pi / 4),
                         (7.3, 0.21, 3, 0.3), (14.0, 0.5, 8, 1.2)]:
        E_J = circuits.ej_from_omega(ghz(w), ghz(ec), n, th)
        p = KpoParams(ghz(ec), E_J, n, th)
        worst = max(worst, abs(circuits.omega_from_circuit(p) / ghz(w) - 1))
        P = 4 * p.kerr
        worst = max(worst, abs(circuits.kerr_and_pump(p, circuits.delta_for_pump(P, p))[1] / P - 1))
        E_C0 = circuits.ec0_from_g(mhz(10.0), p, p)
        worst = max(worst, abs(circuits.g_from_ec0(E_C0, p, p) / mhz(10.0) - 1))
    return worst


def _phase_invariance(setup) -> float:
    small = setup.with_dims((16, 16))
    ref = gate.reference_pair("simple", "sum", small)
    H = gate.build_hamiltonian("simple", "sum", small, 3 * small.K)
    psi, _ = schrodinger_propagate(H, ref.initial, 0.0, small.T_g,
                                   gate.default_settings("simple", small, H))
    # both copies pass through the normalizing constructor
    psi = StateVector(psi.space, psi.amplitudes)
    base = gate.extract_angle_and_fidelity(psi, ref.Psi_even, ref.Psi_odd)
    worst = 0.0
    for chi in np.linspace(0.3, 6.0, 7):
        rot = gate.extract_angle_and_fidelity(
            StateVector(psi.space, np.exp(1j * chi) * psi.amplitudes), ref.Psi_even, ref.Psi_odd)
        worst = max(worst, abs(gate.wrap_angle(rot.theta - base.theta)),
                    abs(rot.fidelity - base.fidelity))
    return worst


def test_criterion_6_property_suite(acceptance, setup):
    zero = gate.run_rzz("simple", "sum", setup, 0.0)
    p_max = 5 * setup.K
    base = gate.run_rzz("simple", "sum", setup, p_max)
    settings = gate.default_settings("simple", setup)
    cert = certify_gate("simple", "sum", setup, p_max, base, settings)
    checks = {
        "commutator": _commutator_defect() < 1e-12,
        "hermitian": _hermiticity(setup) < 1e-10,
        "cat residual": _cat_residual() < 1e-6,
        "damped decay": _damped_decay() < 1e-6,
        "lindblad=schrodinger": _lindblad_equivalence() < 1e-7,
        "round trips": _round_trip() < 1e-9,
        "p=0 gate": abs(zero.theta) < 1e-6 and zero.fidelity > 1 - 1e-6,
        "global phase": _phase_invariance(setup) < 1e-10,
        "certification": cert["passed"],
    }
    failed = [k for k, ok in checks.items() if not ok]
    acceptance(6, not failed,
               f"{len(checks) - len(failed)}/{len(checks)} properties hold"
               + (f", failing: {', '.join(failed)}" if failed else "")
               + f"; certificate dF(tol/2)={cert['tol_halved_delta']:.1e}, "
                 f"dF(D+8)={cert['dim_bumped_delta']:.1e}")
    assert not failed
