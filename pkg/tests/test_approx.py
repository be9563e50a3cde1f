import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orliczlab.approx import (
    build_abar,
    build_fbar,
    build_phibar,
    check_prop_phibar,
    cutoff,
    eta_bound,
    integral_ramp,
    lambda_bar,
    ramp,
    regularize,
    thresholds,
    verify_growth_of_approx,
)
from orliczlab.errors import ParameterError
from orliczlab.growth import build_growth_function
from orliczlab.phi_core import PhiFunction, power
from orliczlab.structures import ModelSpec, build_model

X0 = np.array([0.5, 0.5])
CLIPPED_X1 = {"kind": "linear", "c0": 0.0, "slope": 1.0}
FAMILIES = [
    ModelSpec("p_laplace", {"p": 2.5}),
    ModelSpec("variable_exponent", {"p": {"kind": "linear", "c0": 2.0, "slope": 0.3}}),
    ModelSpec("double_phase", {"p": 2.0, "q": 3.0, "a": CLIPPED_X1}),
    ModelSpec("orlicz_double_phase", {"p": 2.0, "q": 3.5, "a": {"kind": "smoothstep", "lo": 0.0, "hi": 1.0}}),
    ModelSpec("aniso_quartic", {"p": 2.0, "q": 3.0, "a": CLIPPED_X1}),
]


@pytest.fixture(scope="module")
def certs():
    out = {}
    for spec in FAMILIES:
        F = build_model(spec)
        out[spec.family] = (F, build_growth_function(F, directions=16))
    return out


@pytest.fixture(scope="module")
def p2():
    F = build_model(ModelSpec("p_laplace", {"p": 2.0}))
    return F, build_growth_function(F)


# phibar


def test_phibar_of_pure_power_is_identity():
    phi = power(3)
    pb = build_phibar(phi, None, 0.5, 2.0)
    t = np.logspace(-3, 3, 50)
    assert np.allclose(pb.eval(None, t), phi.eval(None, t), rtol=1e-12)
    assert np.allclose(pb.deriv(None, t), 3 * t**2, rtol=1e-12)


def test_phibar_branch_arithmetic():
    phi = PhiFunction(lambda x, t: t**2 + x[..., 0] * t**3, lambda x, t: 2 * t + 3 * x[..., 0] * t**2,
                      autonomous=False, p_lo=2, q_hi=3)
    pb = build_phibar(phi, np.array([1.0, 0.0]), 0.5, 2.0)
    assert pb.a1 == pytest.approx(1.75)
    assert float(pb.deriv(None, np.array([0.25]))[0]) == pytest.approx(0.875)
    # middle branch follows phi(x0, .) up to a constant
    t = np.linspace(0.5, 2.0, 20)
    offset = pb.eval(None, t) - (t**2 + t**3)
    assert np.ptp(offset) < 1e-12
    assert max(pb.continuity_gaps()) < 1e-9


def test_phibar_rejects_bad_thresholds():
    with pytest.raises(ParameterError):
        build_phibar(power(2), None, 2.0, 1.0)


def test_prop51_autonomous_constants_one():
    rep = check_prop_phibar(power(2.5), build_phibar(power(2.5), None, 0.5, 2.0))
    assert rep.passed
    assert rep.Ltilde == pytest.approx(1.0)
    assert rep.items["2"]["literal_upper_holds"]
    assert rep.items["3"]["factor"] == pytest.approx(1.0)


@pytest.mark.parametrize("r", [0.05, 0.1, 0.2])
def test_prop51_variable_exponent(certs, r):
    F, cert = certs["variable_exponent"]
    omega_r = 0.3 * r
    t1, t2 = thresholds(cert, X0, r, omega_r)
    rep = check_prop_phibar(cert, build_phibar(cert, X0, t1, t2), r=r)
    assert rep.passed
    one = rep.items["1"]
    assert one["inc_constant"] == pytest.approx(1.0, abs=1e-9)
    assert one["dec_constant"] == pytest.approx(1.0, abs=1e-9)
    three = rep.items["3"]
    assert three["factor"] <= cert.q1 / cert.p1 * rep.Ltilde * (1 + 1e-9)
    assert rep.items["2"]["max_phi_over_Ltilde_phibar"] <= 1 + 1e-9


def test_thresholds_are_clamped(certs):
    _, cert = certs["variable_exponent"]
    t1, t2 = thresholds(cert, X0, 0.1, 0.03)
    assert t1 <= 0.5 and t2 >= 2.0


# transitions


def test_transition_supports():
    e = cutoff(1.0)
    assert e(np.array([0.5]))[0] == 1.0 and e(np.array([2.5]))[0] == 0.0
    r = ramp(4.0)
    assert r(np.array([1.0]))[0] == 0.0 and r(np.array([5.0]))[0] == 1.0


def test_integral_ramp_lower_bound():
    for t2 in (2.0, 37.0):
        e3 = integral_ramp(t2)
        assert e3(np.array([t2]))[0] >= 1 / 3
        # independent quadrature of h(s)/s^2 on a fine grid
        s = np.linspace(t2 / 2, t2, 200001)
        v = (s - t2 / 2) / (t2 / 4)
        v = np.clip(v, 0, 1)
        h = t2 * (10 * v**3 - 15 * v**4 + 6 * v**5)
        assert e3(np.array([t2]))[0] == pytest.approx(np.trapezoid(h / s**2, s), rel=1e-6)


def test_transition_derivatives_match_finite_differences():
    t = np.linspace(0.3, 5.0, 97)
    for eta in (cutoff(1.0), ramp(2.0), integral_ramp(2.0)):
        v, d1, _ = eta.derivs(t)
        h = 1e-6
        fd = (eta(t + h) - eta(t - h)) / (2 * h)
        assert np.allclose(fd, d1, atol=1e-5)


# abar and fbar


def test_lambda_bar_value():
    assert lambda_bar(2, 2, 1) == 8.0


def test_abar_low_branch(p2):
    F, cert = p2
    abar, bundle = build_abar(F.field, cert, X0, 0.5, 2.0)
    assert bundle.a1 == pytest.approx(0.5)
    xi = np.array([0.25, 0.0])
    # nu/8 * (a1/t1) xi + A(xi) with nu = 1, a1/t1 = 1
    assert np.allclose(abar.eval(None, xi), 9 / 8 * xi)


@pytest.mark.parametrize("family", [s.family for s in FAMILIES])
def test_annulus_identity(certs, family):
    F, cert = certs[family]
    t1, t2 = 0.05, 50.0
    abar, _ = build_abar(F.field, cert, X0, t1, t2)
    fbar, _ = build_fbar(F, cert, X0, t1, t2)
    rng = np.random.default_rng(5)
    t = np.geomspace(2 * t1, t2 / 2, 200)
    d = rng.normal(size=(200, 2))
    xi = t[:, None] * d / np.linalg.norm(d, axis=1, keepdims=True)
    xp = np.broadcast_to(X0, xi.shape)
    assert np.array_equal(abar.eval(None, xi), F.field.eval(xp, xi))
    assert np.array_equal(fbar.eval(None, xi), F.eval(xp, xi))


@pytest.mark.parametrize("family", [s.family for s in FAMILIES])
def test_growth_of_approximants_stable_over_sweep(certs, family):
    F, cert = certs[family]
    for kind in ("abar", "fbar"):
        consts = []
        for t1, t2 in itertools.product(np.geomspace(0.005, 0.5, 3), np.geomspace(2, 200, 3)):
            if kind == "abar":
                _, bundle = build_abar(F.field, cert, X0, t1, t2)
            else:
                _, bundle = build_fbar(F, cert, X0, t1, t2)
            v = verify_growth_of_approx(bundle)
            assert v.nu > 0
            consts.append((v.nu, v.Lambda, v.Lambda_growth))
        c = np.array(consts)
        assert np.all(c.max(axis=0) / c.min(axis=0) < 2.0), kind


def test_fbar_calibration_margin(p2):
    F, cert = p2
    _, bundle = build_fbar(F, cert, X0, 0.1, 10.0)
    v = verify_growth_of_approx(bundle)
    assert v.residuals["cases"]["(t1,2t1]"]["nu"] >= cert.nu / 2 * (1 - 1e-9)


def test_fbar_quadratic_certificate(p2):
    F, cert = p2
    _, bundle = build_fbar(F, cert, X0, 0.5, 2.0)
    v = verify_growth_of_approx(bundle)
    assert float(bundle.phibar.eval(None, np.array([1.0]))[0]) == pytest.approx(0.5)
    assert 0 < v.nu <= 1.0 <= v.Lambda


def test_degenerate_thresholds_recover_frozen_field(certs):
    F, cert = certs["double_phase"]
    abar, _ = build_abar(F.field, cert, X0, 1e-8, 1e8)
    xi = np.array([[0.1, 0.3], [2.0, -1.0], [10.0, 5.0]])
    assert np.allclose(abar.eval(None, xi), F.field.eval(np.broadcast_to(X0, xi.shape), xi), rtol=1e-12)


def test_eta_bound_finite(p2):
    F, cert = p2
    _, bundle = build_fbar(F, cert, X0, 0.5, 2.0)
    assert 1.0 <= eta_bound(bundle) < 50


# regularize


def test_regularize_identity_fixed_point(p2):
    F, _ = p2
    a_eps, _ = regularize(F.field, None, 0.1)
    xi = np.array([[0.01, 0.02], [3.0, -4.0]])
    assert np.allclose(a_eps.eval(None, xi), xi)


def test_regularize_zero_eps_returns_inputs(p2):
    F, cert = p2
    field = F.field
    a, phi = regularize(field, cert.phi, 0.0)
    assert a is field and phi is cert.phi


def test_regularize_p3_magnitude():
    A = build_model(ModelSpec("p_laplace", {"p": 3.0})).field
    eps = 0.2
    a_eps, _ = regularize(A, None, eps)
    xi = np.array([eps, 0.0])
    assert np.linalg.norm(a_eps.eval(None, xi)) == pytest.approx(2 * eps**2)


@settings(max_examples=20, deadline=None)
@given(eps=st.floats(0.01, 0.45), t=st.floats(1e-3, 1e2), ang=st.floats(0, 2 * np.pi))
def test_regularized_jacobian_matches_finite_differences(eps, t, ang):
    A = build_model(ModelSpec("p_laplace", {"p": 3.0})).field
    a_eps, _ = regularize(A, None, eps)
    xi = t * np.array([np.cos(ang), np.sin(ang)])
    h = 1e-6 * t
    fd = np.stack([(a_eps.eval(None, xi + h * e) - a_eps.eval(None, xi - h * e)) / (2 * h) for e in np.eye(2)], -1)
    J = a_eps.jacobian(None, xi)
    assert np.linalg.norm(fd - J) <= 1e-5 * np.linalg.norm(J)


def test_regularized_growth_function_derivative(p2):
    _, cert = p2
    _, phi_eps = regularize(build_model(ModelSpec("p_laplace", {"p": 2.0})).field, cert.phi, 0.1)
    t = np.array([0.05, 1.0, 3.0])
    # phi'(eps + t) t/(eps + t) with phi'(s) = s gives t
    assert np.allclose(phi_eps.deriv(None, t), t)
    assert np.allclose(phi_eps.eval(None, t), t**2 / 2, rtol=1e-10)


def test_regularize_rejects_large_eps(p2):
    F, _ = p2
    with pytest.raises(ParameterError):
        regularize(F.field, None, 0.6)
