import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kposim import fock, gate
from kposim.dynamics import SolverSettings, lindblad_propagate, schrodinger_propagate
from kposim.fock import DensityMatrix, HilbertSpace, StateVector

angles = st.floats(-math.pi, math.pi, exclude_min=True)


@pytest.fixture(scope="module")
def cat_pair():
    space = HilbertSpace((30, 30))
    return fock.cat_pair_states(space, 2.0)


@pytest.fixture(scope="module")
def orthonormal_pair(cat_pair):
    return gate.orthonormalize_pair(*cat_pair)


def test_wrap_angle_ties():
    assert gate.wrap_angle(-math.pi) == math.pi
    assert gate.wrap_angle(math.pi) == math.pi
    assert gate.wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert gate.wrap_angle(0.25) == 0.25


@given(st.floats(-50, 50))
def test_wrap_angle_range(x):
    y = gate.wrap_angle(x)
    assert -math.pi < y <= math.pi
    assert math.isclose(math.cos(x), math.cos(y), abs_tol=1e-9)
    assert math.isclose(math.sin(x), math.sin(y), abs_tol=1e-9)


def test_setup_properties(setup):
    assert setup.K == pytest.approx(2 * math.pi * 0.012)
    assert setup.alpha == 2.0
    assert setup.space.mode_dims == (24, 24)
    sp = setup.simple_params()
    assert sp.P == pytest.approx(4 * setup.K)
    assert sp.Delta12 == pytest.approx(-2 * math.pi)
    assert sp.g == pytest.approx(2 * math.pi * 0.010)


def _coherent_oracle(alpha):
    comps = [(alpha, alpha), (-alpha, -alpha), (alpha, -alpha), (-alpha, alpha)]
    G = np.array([[fock.coherent_overlap(b1, g1) * fock.coherent_overlap(b2, g2)
                   for g1, g2 in comps] for b1, b2 in comps])
    ce, co = np.array([1, 1, 0, 0]), np.array([0, 0, 1, 1])
    v = ce / math.sqrt((ce @ G @ ce).real) + co / math.sqrt((co @ G @ co).real)
    return (G[0] @ v) / math.sqrt((v @ G @ v).real)


def test_prepare_initial():
    space = HilbertSpace((30, 30))
    psi = gate.prepare_initial(space, 2.0)
    assert psi.norm == pytest.approx(1, abs=1e-9)
    pp = fock.coherent_state(space, [2.0, 2.0])
    assert fock.inner_product(pp, psi) == pytest.approx(_coherent_oracle(2.0), abs=1e-9)
    n = np.arange(30)
    parity = np.kron((-1.0) ** n, (-1.0) ** n)
    np.testing.assert_allclose(parity * psi.amplitudes, psi.amplitudes, atol=1e-14)


def test_ideal_target(cat_pair, orthonormal_pair):
    E, O = orthonormal_pair
    t0 = gate.ideal_target(0.0, E, O)
    np.testing.assert_allclose(t0.amplitudes, (E.amplitudes + O.amplitudes) / math.sqrt(2),
                               atol=1e-14)
    a, b = gate.ideal_target(0.7, *cat_pair), gate.ideal_target(0.7 + 2 * math.pi, *cat_pair)
    assert abs(fock.inner_product(a, b)) == pytest.approx(1, abs=1e-12)
    even, odd = cat_pair
    raw = even.amplitudes + 1j * odd.amplitudes
    target = gate.ideal_target(math.pi / 2, even, odd)
    assert target.norm == pytest.approx(1, abs=1e-12)
    np.testing.assert_allclose(target.amplitudes, raw / np.linalg.norm(raw), atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(theta=angles)
def test_extract_recovers_ideal(orthonormal_pair, theta):
    E, O = orthonormal_pair
    out = gate.extract_angle_and_fidelity(gate.ideal_target(theta, E, O), E, O)
    assert out.theta == pytest.approx(theta, abs=1e-9)
    assert out.fidelity == pytest.approx(1, abs=1e-9)
    assert abs(out.leakage) < 1e-9


@settings(max_examples=50, deadline=None)
@given(theta=angles, chi=st.floats(0, 2 * math.pi), mix=st.floats(0.0, 0.3))
def test_global_phase_invariance(cat_pair, theta, chi, mix):
    even, odd = cat_pair
    # an imperfect final state with some weight outside the code space
    leak = fock.coherent_state(even.space, [1.0, -0.5]).amplitudes
    psi = StateVector(even.space, gate.ideal_target(theta, even, odd).amplitudes + mix * leak)
    base = gate.extract_angle_and_fidelity(psi, even, odd)
    rot = gate.extract_angle_and_fidelity(
        StateVector(psi.space, np.exp(1j * chi) * psi.amplitudes), even, odd)
    assert abs(gate.wrap_angle(rot.theta - base.theta)) < 1e-12
    assert abs(rot.fidelity - base.fidelity) < 1e-12
    assert abs(base.leakage + abs(base.alpha1) ** 2 + abs(base.alpha2) ** 2 - 1) < 1e-12


def test_degenerate_projection(orthonormal_pair):
    E, O = orthonormal_pair
    out = gate.extract_angle_and_fidelity(O, E, O)
    assert out.degenerate and out.theta is None
    with pytest.raises(gate.DegenerateProjectionError):
        gate.orthonormalize_pair(E, E)


def test_fidelity_mixed(orthonormal_pair):
    E, O = orthonormal_pair
    ideal = gate.ideal_target(0.3, E, O)
    assert gate.fidelity_mixed(ideal.projector(), ideal) == pytest.approx(1, abs=1e-12)
    space = HilbertSpace((4, 4))
    mixed = DensityMatrix.maximally_mixed(space)
    assert gate.fidelity_mixed(mixed, space.basis(1, 2)) == pytest.approx(1 / 16)


@given(theta=angles)
def test_mixed_readout_of_pure_state(orthonormal_pair, theta):
    E, O = orthonormal_pair
    psi = gate.ideal_target(theta, E, O)
    pure = gate.extract_angle_and_fidelity(psi, E, O)
    mixed = gate.extract_mixed(psi.projector(), E, O)
    assert mixed.theta == pytest.approx(pure.theta, abs=1e-9)
    assert mixed.fidelity == pytest.approx(pure.fidelity, abs=1e-9)


def test_run_rzz_without_pulse(setup):
    out = gate.run_rzz("simple", "sum", setup, 0.0)
    assert abs(out.theta) < 1e-6
    assert out.fidelity > 1 - 1e-6
    assert out.diagnostics["norm_drift"] < 1e-6
    with pytest.raises(ValueError):
        gate.run_rzz("simple", "triple", setup, 0.0)
    with pytest.raises(ValueError):
        gate.run_rzz("simple", "sum", setup, 0.0, gamma=-1.0)
    with pytest.raises(ValueError):
        gate.run_rzz("quantum", "sum", setup, 0.0)


def test_mixed_path_matches_pure_path():
    setup = gate.standard_setup(dims=(10, 10))
    settings = SolverSettings(rel_tol=1e-12, abs_tol=1e-12)
    ref = gate.reference_pair("simple", "sum", setup, settings)
    H = gate.build_hamiltonian("simple", "sum", setup, 4 * setup.K)
    psi, _ = schrodinger_propagate(H, ref.initial, 0.0, setup.T_g, settings)
    rho, _ = lindblad_propagate(H, ref.initial, 0.0, 0.0, setup.T_g, settings)
    pure = gate.extract_angle_and_fidelity(psi, ref.Psi_even, ref.Psi_odd)
    mixed = gate.extract_mixed(rho, ref.Psi_even, ref.Psi_odd)
    assert abs(pure.fidelity - mixed.fidelity) < 1e-7
    assert abs(pure.theta - mixed.theta) < 1e-7


def test_theta_monotone_on_sweep_grid(setup):
    ref = gate.reference_pair("simple", "sum", setup)
    thetas = [gate.run_rzz("simple", "sum", setup, x * setup.K, reference=ref).theta
              for x in np.linspace(0, 5, 51)]
    assert abs(thetas[0]) < 1e-6
    assert np.all(np.diff(thetas) > 0)


def test_peak_for_angle():
    p = gate.peak_for_angle(lambda x: 0.3 * x, math.pi / 2, 0.0, 10.0, 1e-12)
    assert p == pytest.approx(math.pi / 2 / 0.3)
    with pytest.raises(ValueError, match="not bracketed"):
        gate.peak_for_angle(lambda x: 0.1 * x, math.pi / 2, 0.0, 10.0, 1e-12)
