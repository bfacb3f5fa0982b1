import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aerial_impedance.impedance import (DESIGN_KD, DESIGN_KP, DESIGN_MD, DESIGN_PHI, ControllerGains,
                                        GainError, TrackingErrors, derive_phi, impedance_error,
                                        table_gains, target_response, validate_gains)


def test_table_channels_give_integer_phi():
    phi = derive_phi(DESIGN_MD, DESIGN_KD, DESIGN_KP)
    np.testing.assert_allclose(phi, DESIGN_PHI, rtol=0, atol=1e-12)


def test_critical_channel_gives_repeated_root():
    assert derive_phi([1.0], [2.0], [1.0])[0] == pytest.approx(1.0, abs=1e-12)


def test_negative_discriminant_names_channel():
    with pytest.raises(GainError) as err:
        derive_phi([1.0, 1.0], [40.0, 1.0], [144.0, 5.0])
    assert err.value.channel == 1
    assert "channel 1" in str(err.value)


def test_table_gains_validate():
    report = validate_gains(table_gains())
    assert report.passed
    assert report.max_residual < 1e-9
    assert not report.warnings
    assert "PASS" in report.text()


def test_larger_root_passes_with_warning():
    phi = np.array(DESIGN_PHI)
    phi[:3] = 36.0
    report = validate_gains(table_gains(Phi=phi))
    assert report.passed
    np.testing.assert_allclose(report.margin[:3], 4.0)
    assert not report.canonical[:3].any()
    assert any("larger root" in w for w in report.warnings)


def test_zero_stiffness_is_admissible():
    kp = np.array(DESIGN_KP)
    kp[0] = 0.0
    gains = ControllerGains(Md=DESIGN_MD, Kd=DESIGN_KD, Kp=kp, Lambda=np.ones(8))
    assert gains.Phi[0] == 0.0
    report = validate_gains(gains)
    assert report.passed
    assert any("zero stiffness" in w for w in report.warnings)


def test_inconsistent_phi_fails_with_channel():
    kp = np.array(DESIGN_KP)
    kp[2] = 150.0
    report = validate_gains(table_gains(Kp=kp))
    assert not report.passed
    assert any(f.startswith("channel 2") for f in report.failures)


def test_full_matrices_must_be_diagonal():
    with pytest.raises(ValueError):
        ControllerGains(Md=np.ones((2, 2)), Kd=[1, 1], Kp=[0, 0], Lambda=[1, 1])
    g = ControllerGains(Md=np.eye(2), Kd=np.diag([3.0, 3.0]), Kp=[2.0, 2.0], Lambda=[1, 1])
    np.testing.assert_allclose(g.Phi, [1.0, 1.0])


@st.composite
def admissible(draw):
    n = draw(st.integers(1, 8))
    md = np.array([draw(st.floats(0.01, 10.0)) for _ in range(n)])
    kd = np.array([draw(st.floats(0.1, 100.0)) for _ in range(n)])
    frac = np.array([draw(st.floats(0.0, 1.0)) for _ in range(n)])
    kp = frac * kd * kd / (4 * md)
    return md, kd, kp


@settings(max_examples=200, deadline=None)
@given(admissible())
def test_derived_phi_always_validates(g):
    md, kd, kp = g
    gains = ControllerGains(Md=md, Kd=kd, Kp=kp, Lambda=np.ones(md.size))
    report = validate_gains(gains, tol=1e-9)
    assert report.passed, report.failures


@settings(max_examples=100, deadline=None)
@given(admissible(), st.randoms(use_true_random=False))
def test_channel_permutation_commutes(g, rnd):
    md, kd, kp = g
    perm = list(range(md.size))
    rnd.shuffle(perm)
    np.testing.assert_allclose(derive_phi(md[perm], kd[perm], kp[perm]),
                               derive_phi(md, kd, kp)[perm], rtol=1e-14)


def test_impedance_error_examples():
    gains = table_gains()
    z = np.zeros(8)
    assert np.all(impedance_error(TrackingErrors(z, z, z), z, gains) == 0)
    e_tau = z.copy()
    e_tau[0] = 1.0
    np.testing.assert_array_equal(impedance_error(TrackingErrors(z, z, z), e_tau, gains),
                                  -e_tau)
    with pytest.raises(ValueError):
        impedance_error(TrackingErrors(z, z), z, gains)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=32, max_size=32), st.floats(-3, 3))
def test_impedance_error_is_linear(vals, c):
    gains = table_gains()
    v = np.array(vals).reshape(4, 8)
    a = TrackingErrors(v[0], v[1], v[2])
    scaled = TrackingErrors(c * v[0], c * v[1], c * v[2])
    np.testing.assert_allclose(impedance_error(scaled, c * v[3], gains),
                               c * impedance_error(a, v[3], gains), atol=1e-9)


def test_xi_norm_dominates_parts():
    err = TrackingErrors(np.array([3.0, 0.0]), np.array([0.0, 4.0]))
    assert np.linalg.norm(err.xi) >= max(np.linalg.norm(err.e), np.linalg.norm(err.e_dot))


def test_target_response_zero_input_stays_zero():
    r = target_response(0.0, 0.0, np.zeros(8), table_gains(), horizon=1.0, dt=1e-3)
    assert np.all(r.e == 0)


def test_target_response_static_gain():
    gains = table_gains()
    e_tau = np.zeros(8)
    e_tau[0] = 144.0
    r = target_response(0.0, 0.0, e_tau, gains, horizon=6.0, dt=1e-3)
    assert r.e[-1, 0] == pytest.approx(1.0, abs=1e-6)


def test_target_response_decay_rates_match_phi_roots():
    # impulse-like initial velocity on a position channel: e(t) = (e^-4t - e^-36t) / 32
    gains = table_gains()
    r = target_response(0.0, 1.0, np.zeros(8), gains, horizon=1.0, dt=1e-4)
    exact = (np.exp(-4 * r.t) - np.exp(-36 * r.t)) / 32.0
    np.testing.assert_allclose(r.e[:, 0], exact, atol=1e-9)


def test_target_response_has_zero_impedance_error():
    gains = table_gains()
    e_tau = lambda t: np.full(8, np.sin(3 * t))
    r = target_response(np.full(8, 0.1), 0.0, e_tau, gains, horizon=1.0, dt=1e-3)
    for k in range(0, r.t.size, 97):
        errs = TrackingErrors(r.e[k], r.e_dot[k], r.e_ddot[k])
        assert np.max(np.abs(impedance_error(errs, e_tau(r.t[k]), gains))) < 1e-6
