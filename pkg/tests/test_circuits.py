import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kposim import circuits, drives, fock
from kposim.circuits import (CalibrationError, CircuitError, CouplingParams, GatePulseParams,
                             KpoParams, PumpTone, SimpleModelParams, ghz, mhz, to_ghz)
from kposim.fock import HilbertSpace

TWO_PI = 2 * math.pi
EC = ghz(0.3)

# closed-form values evaluated by hand and by a root-finding inversion
# of the coupling formula (scipy brentq on g(E_C0) = 10 MHz)
E_C0_ORACLE_GHZ = 314.04265445104545
V_ORACLE_MHZ = 4.576620428378843
# static single-KPO resonance from scipy.linalg.cosm in a 160-level basis
OMEGA_TILDE_ORACLE_GHZ = 9.987985554442107
PULSE_QUARTER = math.tanh(0.75) * math.tanh(2.25) / math.tanh(1.5) ** 2


@pytest.fixture(scope="module")
def kpo1():
    return KpoParams.from_omega(ghz(10.0), EC, 5)


@pytest.fixture(scope="module")
def kpo2():
    return KpoParams.from_omega(ghz(11.0), EC, 5)


def test_unit_helpers():
    assert ghz(1.0) == pytest.approx(TWO_PI)
    assert mhz(1000.0) == pytest.approx(ghz(1.0))
    assert to_ghz(ghz(3.7)) == pytest.approx(3.7)


def test_omega_from_circuit(kpo1):
    p = KpoParams(EC, ghz(208.3333333333333) / math.cos(math.pi / 4), 5)
    assert to_ghz(circuits.omega_from_circuit(p)) == pytest.approx(10.0, rel=1e-12)
    quad = KpoParams(4 * EC, p.E_J, 5)
    assert circuits.omega_from_circuit(quad) == pytest.approx(2 * p.omega)
    wide = KpoParams(EC, p.E_J, 20)
    assert wide.omega == pytest.approx(p.omega / 2)


def test_ej_from_omega(kpo1, kpo2):
    assert to_ghz(kpo1.EJ_eff) == pytest.approx(208.3333333, rel=1e-9)
    assert to_ghz(kpo1.E_J) == pytest.approx(294.6278254944, rel=1e-9)
    assert to_ghz(kpo2.EJ_eff) == pytest.approx(252.0833333, rel=1e-9)
    with pytest.raises(CircuitError):
        circuits.ej_from_omega(ghz(10), EC, 5, math.pi / 2)


def test_params_validation():
    with pytest.raises(CircuitError):
        KpoParams(-1.0, 1.0, 5)
    with pytest.raises(CircuitError):
        KpoParams(EC, ghz(300), 0)
    with pytest.raises(CircuitError):
        KpoParams(EC, ghz(300), 5, math.pi / 2)
    with pytest.warns(UserWarning):
        KpoParams(EC, ghz(3.0), 1)
    with pytest.raises(CircuitError):
        PumpTone(-0.1, 1.0)
    with pytest.warns(UserWarning):
        PumpTone(0.2, 1.0)
    with pytest.raises(CircuitError):
        GatePulseParams(-1.0, 40.0)
    with pytest.raises(CircuitError):
        GatePulseParams(1.0, 40.0, kind="triple")
    with pytest.raises(CircuitError):
        CouplingParams()


def test_kerr_and_pump(kpo1):
    K, P = circuits.kerr_and_pump(kpo1, PumpTone(0.05, 1.0))
    assert to_ghz(K) * 1e3 == pytest.approx(12.0)
    assert to_ghz(P) * 1e3 == pytest.approx(125.0)
    assert P / K == pytest.approx(10.416666666, rel=1e-9)
    assert circuits.kerr_and_pump(kpo1, 0.0)[1] == 0.0


def test_delta_for_pump(kpo1):
    K = kpo1.kerr
    assert circuits.delta_for_pump(4 * K, kpo1) == pytest.approx(0.0192, rel=1e-12)
    assert circuits.delta_for_pump(0.0, kpo1) == 0.0
    assert circuits.delta_for_pump(8 * K, kpo1) == pytest.approx(
        2 * circuits.delta_for_pump(4 * K, kpo1))


def test_coupler_from_target_g(kpo1, kpo2):
    E_C0, g = CouplingParams(g=mhz(10.0)).resolve(kpo1, kpo2)
    assert to_ghz(E_C0) == pytest.approx(E_C0_ORACLE_GHZ, rel=1e-10)
    assert to_ghz(circuits.coupling_coefficient(E_C0, kpo1, kpo2)) * 1e3 == pytest.approx(
        V_ORACLE_MHZ, rel=1e-10)
    total = E_C0 + 2 * EC
    E_C0_double = circuits.ec0_from_g(2 * g, kpo1, kpo2)
    assert E_C0_double + 2 * EC == pytest.approx(total / 2)
    assert circuits.g_from_ec0(E_C0, kpo1, kpo2) == pytest.approx(g, rel=1e-12)
    with pytest.raises(CircuitError):
        circuits.ec0_from_g(ghz(100.0), kpo1, kpo2)


def test_coupler_limit(kpo1, kpo2):
    d1, d2 = circuits.renormalized_pair(kpo1, kpo2, 1e12)
    assert d1.E_C == pytest.approx(kpo1.E_C, rel=1e-9)
    assert circuits.coupling_coefficient(1e12, kpo1, kpo2) < 1e-9


@settings(max_examples=60, deadline=None)
@given(w=st.floats(1.0, 30.0), ec=st.floats(0.05, 1.0), n=st.integers(1, 10),
       theta=st.floats(0.05, 1.4), ratio=st.floats(0.1, 20.0), g_mhz=st.floats(0.5, 30.0))
def test_round_trips(w, ec, n, theta, ratio, g_mhz):
    E_C = ghz(ec)
    omega = ghz(w)
    E_J = circuits.ej_from_omega(omega, E_C, n, theta)
    with warnings.catch_warnings():
        # the sampled ranges include parameters outside the transmon regime
        warnings.simplefilter("ignore")
        p = KpoParams(E_C, E_J, n, theta)
    assert circuits.omega_from_circuit(p) == pytest.approx(omega, rel=1e-9)
    P = ratio * p.kerr
    assert circuits.kerr_and_pump(p, circuits.delta_for_pump(P, p))[1] == pytest.approx(P, rel=1e-9)
    try:
        E_C0 = circuits.ec0_from_g(mhz(g_mhz), p, p)
    except CircuitError:
        return
    assert circuits.g_from_ec0(E_C0, p, p) == pytest.approx(mhz(g_mhz), rel=1e-9)


def test_pulse_envelope():
    gp = GatePulseParams(2.0, 40.0, 3.0)
    assert circuits.pulse_envelope(0.0, gp) == 0.0
    assert circuits.pulse_envelope(40.0, gp) == pytest.approx(0.0, abs=1e-15)
    assert circuits.pulse_envelope(20.0, gp) == pytest.approx(2.0, rel=1e-15)
    assert circuits.pulse_envelope(10.0, gp) == pytest.approx(2.0 * PULSE_QUARTER, rel=1e-14)
    assert circuits.pulse_envelope(-1.0, gp) == 0.0
    assert circuits.pulse_envelope(41.0, gp) == 0.0


@given(st.floats(0.0, 20.0))
def test_pulse_symmetric_and_bounded(t):
    gp = GatePulseParams(1.0, 40.0, 3.0)
    a, b = circuits.pulse_envelope(t, gp), circuits.pulse_envelope(40.0 - t, gp)
    assert a == pytest.approx(b, abs=1e-14)
    assert 0.0 <= a <= 1.0 + 1e-15


def test_delta_g_envelope(kpo1):
    K = kpo1.kerr
    gp = GatePulseParams(5 * K, 40.0, 3.0)
    peak = circuits.delta_g_envelope(20.0, gp, kpo1)
    assert peak == pytest.approx(0.024, rel=1e-12)
    assert circuits.kerr_and_pump(kpo1, peak)[1] == pytest.approx(5 * K, rel=1e-12)
    assert circuits.delta_g_envelope(13.0, gp.with_peak(0.0), kpo1) == 0.0
    # the difference tone acts through a†a, whose coefficient is four times the a^2 one
    diff = GatePulseParams(5 * K, 40.0, 3.0, kind="difference")
    assert circuits.delta_g_envelope(20.0, diff, kpo1) == pytest.approx(0.006, rel=1e-12)
    with pytest.raises(CircuitError):
        circuits.gate_delta_per_amplitude(kpo1, "triple")


# --- simple-model builders --------------------------------------------------------

def test_cat_is_kerr_eigenstate():
    K = 1.0
    alpha = 2.0
    sp = SimpleModelParams(K=K, P=K * alpha ** 2)
    H = circuits.build_simple_single(sp, 30).static_operator()
    psi = fock.coherent_state(H.space, alpha)
    residual = H.entries @ psi.amplitudes - (sp.P ** 2 / (2 * K)) * psi.amplitudes
    assert np.linalg.norm(residual) < 1e-6


def test_simple_single_without_pump():
    H = circuits.build_simple_single(SimpleModelParams(K=2.0, P=0.0), 6).static_operator()
    n = np.arange(6)
    np.testing.assert_allclose(H.entries, np.diag(-(2.0 / 2) * n * (n - 1)), atol=1e-14)
    assert H.is_hermitian()


def _setup_pair(g=0.3):
    sp = SimpleModelParams(K=1.0, P=4.0, g=g, Delta12=-50.0)
    return sp, HilbertSpace((8, 8))


def test_simple_two_at_t0():
    sp, space = _setup_pair()
    gp = GatePulseParams(5.0, 40.0, 3.0)
    H = circuits.build_simple_two(sp, gp, space)
    single = circuits.build_simple_single(SimpleModelParams(K=1.0, P=4.0), 8).matrix(0.0)
    a = fock.lowering_matrix(8)
    expected = (np.kron(single, np.eye(8)) + np.kron(np.eye(8), single)
                + sp.g * (np.kron(a, a.T) + np.kron(a.T, a)))
    np.testing.assert_allclose(H.matrix(0.0), expected, atol=1e-12)


def test_simple_two_uncoupled_is_tensor_sum():
    sp, space = _setup_pair(g=0.0)
    H = circuits.build_simple_two(sp, GatePulseParams(0.0, 40.0), space)
    single = circuits.build_simple_single(SimpleModelParams(K=1.0, P=4.0), 8).matrix(0.0)
    expected = np.kron(single, np.eye(8)) + np.kron(np.eye(8), single)
    np.testing.assert_allclose(H.matrix(1.234), expected, atol=1e-12)


def test_simple_two_expectation_oracle(setup):
    """<alpha,alpha|H(t)|alpha,alpha> from coherent-state moments."""
    sp = setup.simple_params()
    K, P, g, D12 = sp.K, sp.P, sp.g, sp.Delta12
    p0 = 5 * K
    gp = GatePulseParams(p0, 40.0, 3.0)
    space = HilbertSpace((40, 40))
    H = circuits.build_simple_two(sp, gp, space)
    t = 0.3
    a = 2.0
    psi = fock.coherent_state(space, [a, a])
    value = np.vdot(psi.amplitudes, H.matrix(t) @ psi.amplitudes)
    pg = p0 * math.tanh(3 * t / 40) * math.tanh(3 * (1 - t / 40)) / math.tanh(1.5) ** 2
    oracle = (2 * (-(K / 2) * a ** 4 + (P / 2) * 2 * a ** 2)
              + g * a * a * 2 * math.cos(D12 * t)
              + (pg / 2) * a ** 2 * 2 * math.cos(D12 * t))
    assert value.real == pytest.approx(oracle, rel=1e-9)
    assert abs(value.imag) < 1e-9


def test_difference_drive_builder():
    sp, space = _setup_pair()
    gp = GatePulseParams(5.0, 40.0, 3.0, kind="difference")
    H = circuits.build_simple_two_diff(sp, gp, space)
    gate = [term for term in H.terms if term.role == "gate"]
    assert len(gate) == 1
    f = gate[0].factors[0]
    np.testing.assert_array_equal(f, np.diag(np.diag(f)))
    t_zero = (math.pi / 2) / abs(sp.Delta12) + 10 * math.pi / abs(sp.Delta12)
    assert abs(gate[0].coeff(t_zero)) < 1e-12
    H0 = circuits.build_simple_two_diff(sp, gp.with_peak(0.0), space)
    Hs = circuits.build_simple_two(sp, GatePulseParams(0.0, 40.0), space)
    np.testing.assert_allclose(H0.matrix(3.3), Hs.matrix(3.3), atol=1e-14)
    with pytest.raises(CircuitError):
        circuits.build_simple_two(sp, gp, space)
    with pytest.raises(CircuitError):
        circuits.build_simple_two_diff(sp, GatePulseParams(1.0, 40.0), space)


def _all_builders(setup):
    sp = setup.simple_params()
    yield circuits.build_simple_single(SimpleModelParams(K=sp.K, P=sp.P), 12)
    yield circuits.build_simple_single(SimpleModelParams(K=sp.K, P=sp.P), 12, drives.ramp(40.0))
    space = HilbertSpace((6, 6))
    yield circuits.build_simple_two(sp, setup.pulse(5 * sp.K, "sum"), space)
    yield circuits.build_simple_two_diff(sp, setup.pulse(20 * sp.K, "difference"), space)
    p = setup.kpo1
    yield circuits.build_sc_single(p, PumpTone(0.02, 2 * p.omega), 8)
    for kind in ("sum", "difference"):
        res = circuits.resolve_sc_two(setup.kpo1, setup.kpo2, setup.coupling, 4.0, kind,
                                      resonance_mode="harmonic")
        yield circuits.build_sc_two(res, setup.pulse(5 * sp.K, kind), space)


def test_builders_hermitian_on_time_grid(setup):
    grid = np.linspace(0.0, setup.T_g, 1001)
    for H in _all_builders(setup):
        worst = max(H.hermiticity_error(t) for t in grid)
        assert worst < 1e-10, H


# --- lab-frame circuit builders --------------------------------------------------------

def test_sc_single_gap_near_omega(kpo1):
    H = circuits.build_sc_static(kpo1, 30)
    gap = H.entries[1, 1] - H.entries[0, 0]
    assert abs(gap.real - kpo1.omega) < 3 * kpo1.kerr


def test_sc_cos_factor_at_node(kpo1):
    wp = 2 * kpo1.omega
    H = circuits.build_sc_single(kpo1, PumpTone(0.05, wp), 8)
    jos = [term for term in H.terms if term.label == "josephson"][0]
    t_node = (math.pi / 2) / wp
    assert jos.coeff(t_node) == pytest.approx(-kpo1.N * kpo1.E_J * math.cos(kpo1.theta0),
                                              rel=1e-14)


def test_sc_quartic_remainder(kpo1):
    """Static H plus the quartic term of the cosine reduces to omega a†a."""
    dim = 12
    blocks = circuits.transmon_blocks(kpo1, dim)
    H = circuits.sc_static_local(kpo1, blocks)
    _, s_phi = fock.charge_phase_scales(kpo1.E_C, kpo1.EJ_eff, kpo1.N)
    a = fock.lowering_matrix(dim + 10)
    phi = s_phi * (a + a.T)
    phi4 = np.linalg.matrix_power(phi, 4)[:dim, :dim]
    quartic = -kpo1.EJ_eff / (24 * kpo1.N ** 3) * phi4
    for n in range(1, 5):
        remainder = (H - quartic)[n, n] - (H - quartic)[0, 0]
        assert remainder.real == pytest.approx(kpo1.omega * n, rel=1e-3)
    # without the quartic term the shift is of order K
    assert abs((H[1, 1] - H[0, 0]).real - kpo1.omega) > 0.5 * kpo1.kerr


def test_calibrate_resonance_trivial():
    s = HilbertSpace((10,))
    harmonic = fock.number(s) * 3.7
    assert circuits.calibrate_resonance(harmonic) == pytest.approx(3.7, rel=1e-14)
    a = fock.lowering_matrix(10)
    kerr = fock.OperatorMatrix(s, -(0.5) * (a.T @ a.T @ a @ a), hermitian=True)
    assert circuits.calibrate_resonance(kerr) == pytest.approx(0.0, abs=1e-14)


def test_calibrate_resonance_degenerate():
    s = HilbertSpace((4,))
    mixed = np.zeros((4, 4))
    mixed[0, 1] = mixed[1, 0] = 1.0
    with pytest.raises(CalibrationError):
        circuits.calibrate_resonance(fock.OperatorMatrix(s, mixed, hermitian=True))


def test_calibrate_static_sc_oracle(kpo1):
    w = circuits.calibrate_kpo(kpo1, 40)
    assert to_ghz(w) == pytest.approx(OMEGA_TILDE_ORACLE_GHZ, rel=1e-9)
    assert circuits.calibrate_kpo(kpo1, 40, "harmonic") == kpo1.omega
    with pytest.raises(CircuitError):
        circuits.calibrate_kpo(kpo1, 40, "guess")


def test_resolved_two_kpo_circuit(setup):
    res = setup.sc_setup("sum")
    s = res.summary()
    assert s["E_C0_GHz"] == pytest.approx(E_C0_ORACLE_GHZ, rel=1e-10)
    assert s["V_MHz"] == pytest.approx(V_ORACLE_MHZ, rel=1e-10)
    assert s["g_MHz"] == pytest.approx(10.0, rel=1e-9)
    assert s["carrier_GHz"] == pytest.approx(sum(s["omega_tilde_GHz"]))
    assert s["omega_p_GHz"][0] == pytest.approx(2 * s["omega_tilde_GHz"][0])
    diff = setup.sc_setup("difference")
    w1, w2 = diff.omega_tilde
    assert diff.carrier == pytest.approx(abs(w1 - w2))


def test_sc_two_static_without_drives(setup):
    res = circuits.resolve_sc_two(setup.kpo1, setup.kpo2, setup.coupling, 0.0,
                                  resonance_mode="harmonic")
    H = circuits.build_sc_two(res, setup.pulse(0.0, "sum"), HilbertSpace((5, 5)))
    np.testing.assert_allclose(H.matrix(0.0), H.matrix(0.37), atol=1e-12)
    with pytest.raises(CircuitError):
        circuits.build_sc_two(res, setup.pulse(0.0, "sum"), HilbertSpace((5,)))


def test_gate_off_keeps_pumps(setup):
    res = circuits.resolve_sc_two(setup.kpo1, setup.kpo2, setup.coupling, 4.0,
                                  resonance_mode="harmonic")
    space = HilbertSpace((5, 5))
    H = circuits.build_sc_two(res, setup.pulse(5 * setup.K, "sum"), space)
    H0 = circuits.build_sc_two(res, setup.pulse(0.0, "sum"), space)
    for t in (0.0, 7.1, 20.0):
        np.testing.assert_allclose(H.gate_off().matrix(t), H0.matrix(t), atol=1e-9)
