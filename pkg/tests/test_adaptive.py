from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aerial_impedance.adaptive import (AdaptiveImpedanceController, AdaptiveState, Measurement,
                                       ReferenceSignal, adaptive_derivatives, advance_adaptive,
                                       auxiliary_error, control_torque, gamma_derivative,
                                       robust_gain_rho, robust_term)
from aerial_impedance.dynamics import (PlantParameters, coriolis_matrix, forward_dynamics,
                                       gravity_vector, manipulator_jacobian, mass_matrix,
                                       sample_configurations)
from aerial_impedance.impedance import table_gains

N = 8
Z = np.zeros(N)


def state(H=(0.01,) * 4, zeta=0.1, gamma=Z):
    return AdaptiveState(gamma=np.array(gamma, dtype=float), H=np.array(H, dtype=float),
                         zeta=zeta)


def meas(chi=Z, v=Z, acc=Z, f=(0, 0, 0), J=None, f_d=None, t=0.0):
    J = np.zeros((3, 2)) if J is None else J
    return Measurement(t, np.asarray(chi, float), np.asarray(v, float), np.asarray(acc, float),
                       np.asarray(f, float), J, f_d)


def test_auxiliary_error_examples():
    phi = table_gains().Phi
    assert np.all(auxiliary_error(Z, Z, Z, phi) == 0)
    e, ed = np.arange(8.0), np.ones(8)
    np.testing.assert_allclose(auxiliary_error(e, ed, ed + phi * e, phi), 0.0)
    e = Z.copy()
    e[0] = 1.0
    assert auxiliary_error(e, Z, Z, phi)[0] == 4.0


def test_gamma_derivative_examples():
    g = table_gains()
    assert np.all(gamma_derivative(Z, Z, g) == 0)
    gamma = Z.copy()
    gamma[0] = 1.0
    assert gamma_derivative(gamma, Z, g)[0] == pytest.approx(-36.0)


def test_gamma_settles_at_compliance_equilibrium():
    g = table_gains()
    e_tau = np.linspace(0.1, 0.8, 8)
    st_ = state()
    for _ in range(6000):
        st_ = advance_adaptive(st_, Z, np.zeros(16), Z, e_tau, g, 2e-3)
    np.testing.assert_allclose(st_.gamma, e_tau / g.damping_margin, rtol=1e-9)


def test_rho_examples():
    assert robust_gain_rho(state(H=(0, 0, 0, 0)), np.zeros(16), Z) == pytest.approx(0.1)
    xi = np.zeros(16)
    xi[0] = 2.0
    acc = Z.copy()
    acc[1] = 3.0
    assert robust_gain_rho(state(H=(1, 1, 1, 1), zeta=0.0), xi, acc) == pytest.approx(10.0)


def test_robust_term_examples():
    assert np.all(robust_term(Z, 2.0, 0.1) == 0)
    s = Z.copy()
    s[0] = 0.2
    np.testing.assert_allclose(robust_term(s, 2.0, 0.1), -10.0 * s)
    s[0] = 0.05
    np.testing.assert_allclose(robust_term(s, 2.0, 0.1), -20.0 * s)


vectors = st.lists(st.floats(-5, 5, allow_nan=False), min_size=N, max_size=N).map(np.array)


@settings(max_examples=200, deadline=None)
@given(vectors, st.floats(0, 50), st.floats(1e-4, 1.0))
def test_robust_term_bounded_and_dissipative(s, rho, width):
    out = robust_term(s, rho, width)
    assert np.linalg.norm(out) <= rho * (1 + 1e-12)
    assert s @ out <= 0.0


@settings(max_examples=100, deadline=None)
@given(vectors.filter(lambda v: np.linalg.norm(v) > 1e-6), st.floats(0, 50),
       st.floats(1e-3, 1.0))
def test_robust_term_continuous_at_layer_edge(s, rho, width):
    edge = s / np.linalg.norm(s) * width
    outer = -rho * edge / np.linalg.norm(edge)
    inner = -rho * edge / width
    np.testing.assert_allclose(robust_term(edge, rho, width), outer, atol=1e-12)
    np.testing.assert_allclose(outer, inner, atol=1e-12)


def test_adaptive_derivative_examples():
    g = table_gains()
    Hdot, zdot = adaptive_derivatives(state(), Z, np.zeros(16), Z, g)
    np.testing.assert_allclose(Hdot, -0.1)
    assert zdot == pytest.approx(-0.1 + g.epsilon)

    s = Z.copy()
    s[0] = 1.0
    xi = np.zeros(16)
    xi[0] = 2.0
    Hdot, zdot = adaptive_derivatives(state(), s, xi, Z, g)
    assert Hdot[2] == pytest.approx(3.9)
    assert zdot == 0.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 3), st.floats(0, 5), st.floats(0, 500)),
                min_size=1, max_size=60))
def test_estimates_stay_admissible(inputs):
    g = table_gains()
    st_ = state()
    for sn, xn, an in inputs:
        s = np.full(N, sn / np.sqrt(N))
        xi = np.full(16, xn / 4.0)
        acc = np.full(N, an / np.sqrt(N))
        st_ = advance_adaptive(st_, s, xi, acc, Z, g, 1e-3)
        assert np.all(st_.H >= 0)
        assert st_.zeta > 0


def test_adaptive_state_check_rejects_bad_values():
    with pytest.raises(AssertionError):
        state(H=(0.01, -1e-3, 0.01, 0.01)).check()
    with pytest.raises(AssertionError):
        state(zeta=0.0).check()


def test_zero_errors_drive_estimates_to_rest():
    g = table_gains()
    st_ = state(gamma=np.full(N, 0.2))
    for _ in range(12000):
        st_ = advance_adaptive(st_, Z, np.zeros(16), Z, Z, g, 2e-3)
    np.testing.assert_allclose(st_.H, 0.0, atol=1e-12)
    assert st_.zeta == pytest.approx(g.epsilon, rel=1e-5)
    np.testing.assert_allclose(st_.gamma, 0.0, atol=1e-12)


def _roll(dt, horizon=0.2):
    g = table_gains()
    st_ = state(gamma=np.full(N, 0.3))
    s = np.full(N, 0.01)
    xi = np.full(16, 0.1)
    acc = np.full(N, 2.0)
    e_tau = np.linspace(-1, 1, N)
    for _ in range(int(round(horizon / dt))):
        st_ = advance_adaptive(replace(st_, e_tau_prev=e_tau), s, xi, acc, e_tau, g, dt)
    return np.concatenate([st_.gamma, st_.H, [st_.zeta]])


def test_adaptive_integration_is_fourth_order():
    ref = _roll(1e-5)
    err1 = np.max(np.abs(_roll(4e-3) - ref))
    err2 = np.max(np.abs(_roll(2e-3) - ref))
    assert err1 / err2 > 12.0


def test_control_torque_zero_case():
    tau, info = control_torque(meas(), ReferenceSignal(Z, Z, Z), state(H=(0,) * 4, zeta=0.0),
                               table_gains())
    np.testing.assert_array_equal(tau, 0.0)
    assert info["rho"] == 0.0


def test_control_torque_perfect_tracking():
    g = table_gains()
    acc_d = np.linspace(-1, 1, N)
    gamma = np.full(N, 0.05)
    chi_dot = g.Phi * 0.0 + gamma          # s = e_dot + Phi e - gamma = 0 with e = 0
    J = np.array([[0.1, 0.2], [0.0, 0.0], [-0.3, 0.1]])
    f_d = np.array([0.0, 0.0, 1.0])
    ref = ReferenceSignal(Z, Z, acc_d)
    tau, info = control_torque(meas(v=chi_dot, J=J, f_d=f_d), ref, state(gamma=gamma), g)
    tau_d = np.zeros(N)
    tau_d[6:] = J.T @ f_d
    expected = g.Md * (acc_d - g.Phi * chi_dot) - tau_d - g.damping_margin * gamma
    np.testing.assert_allclose(info["s"], 0.0, atol=1e-15)
    np.testing.assert_allclose(tau, expected, atol=1e-12)


def test_trim_is_added_verbatim():
    trim = np.zeros(N)
    trim[2] = 30.0
    g0, g1 = table_gains(), table_gains(trim=trim)
    args = (meas(), ReferenceSignal(Z, Z, Z), state())
    np.testing.assert_allclose(control_torque(*args, g1)[0] - control_torque(*args, g0)[0], trim)


def test_closed_loop_sliding_dynamics_on_true_plant(rng):
    # With the true acceleration, Md s_dot = -Lambda s + dtau - E, where
    # E = (M - Md) chi_ddot + C chi_dot + g collects the plant terms.
    plant = PlantParameters(payload_mass=0.1)
    g = table_gains()
    chi = sample_configurations(2, 1, rng, max_tilt=0.3)[0]
    v = rng.normal(scale=0.5, size=N)
    ref = ReferenceSignal(chi + rng.normal(scale=0.05, size=N), rng.normal(scale=0.3, size=N),
                          rng.normal(size=N))
    J = manipulator_jacobian(chi, plant)
    f_ext = np.array([0.3, 0.0, -1.2])
    gamma = rng.normal(scale=0.1, size=N)
    ad = state(gamma=gamma)
    acc_guess = rng.normal(size=N)
    m = meas(chi, v, acc_guess, f_ext, J)
    tau, info = control_torque(m, ref, ad, g)
    acc = forward_dynamics(chi, tau, plant, velocities=v, tau_ext=m.tau_ext)
    s_dot = (acc - ref.chi_ddot) + g.Phi * (v - ref.chi_dot) - gamma_derivative(gamma, m.e_tau, g)
    E = ((mass_matrix(chi, plant) - np.diag(g.Md)) @ acc
         + coriolis_matrix(chi, v, plant) @ v + gravity_vector(chi, plant))
    np.testing.assert_allclose(g.Md * s_dot, -g.Lambda * info["s"] + info["dtau"] - E,
                               atol=1e-9)


def test_controller_step_is_deterministic_and_rejects_nan():
    ctrl = AdaptiveImpedanceController(table_gains())
    st0 = ctrl.initial_state()
    m = meas(chi=np.full(N, 0.01), v=np.full(N, -0.02), acc=np.full(N, 0.5))
    ref = ReferenceSignal(Z, Z, Z)
    a = ctrl.step(st0, m, ref, 1e-3)
    b = ctrl.step(st0, m, ref, 1e-3)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1].H, b[1].H)
    bad = meas(chi=np.full(N, np.nan))
    with pytest.raises(ValueError):
        ctrl.step(st0, bad, ref, 1e-3)
    with pytest.raises(ValueError):
        ctrl.step(st0, m, ref, 0.0)
    assert st0.zeta == 0.1 and np.all(st0.H == 0.01)
