import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orliczlab.errors import ConvexificationError, GrowthError, MonotonicityError
from orliczlab.growth import (
    build_growth_function,
    check_equivalences,
    check_monotonicity,
    convexify,
    extract_psi_prime,
    is_convex_on_grid,
)
from orliczlab.phi_core import SampleGrid, check_condition
from orliczlab.structures import ModelSpec, VectorField, build_model

T = np.logspace(-3, 3, 61)


def p_laplace(p):
    return build_model(ModelSpec("p_laplace", {"p": p}))


@pytest.fixture(scope="module")
def cert2():
    return build_growth_function(p_laplace(2))


@pytest.fixture(scope="module")
def cert3():
    return build_growth_function(p_laplace(3))


# extract_psi_prime


def test_psi_prime_closed_forms():
    t = np.array([0.5, 1.0, 2.0])
    assert np.allclose(extract_psi_prime(p_laplace(2).field, None, t), t)
    assert np.allclose(extract_psi_prime(p_laplace(3).field, None, t), 2 * t**2)


def test_psi_prime_dense_sweep_oracle():
    A = p_laplace(3).field
    # independent oracle: SVD over a dense uniform angle sweep
    ang = np.linspace(0, 2 * np.pi, 2001)
    xi = 1.3 * np.stack([np.cos(ang), np.sin(ang)], -1)
    sv = np.linalg.svd(A.jacobian(None, xi), compute_uv=False)[:, 0]
    assert extract_psi_prime(A, None, 1.3)[0] == pytest.approx(1.3 * sv.max(), rel=1e-9)


def test_psi_prime_refines_monotonically():
    A = build_model(ModelSpec("aniso_quartic", {"p": 2.0, "q": 3.0, "a": 0.5})).field
    x = np.array([0.5, 0.5])
    t = np.array([0.1, 2.0, 30.0])
    coarse = extract_psi_prime(A, x, t, 64, seed=0)
    fine = extract_psi_prime(A, x, t, 256, seed=0)
    assert np.all(fine >= coarse - 1e-12)
    assert np.all(fine <= 1.05 * coarse)


def test_psi_prime_rejects_zero_t():
    with pytest.raises(Exception):
        extract_psi_prime(p_laplace(2).field, None, np.array([0.0, 1.0]))


# convexify


def test_convexify_square_is_fixed():
    res = convexify(T, T**2, 2, 2)
    assert res.equiv_constant == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(res.profile.value(T), T**2)


def test_convexify_wobbly_power():
    psi = T**2 * (2 + np.sin(np.log(T)))
    res = convexify(T, psi, 1.5, 3)
    assert res.equiv_constant <= 3
    assert is_convex_on_grid(T, res.profile.value(T))
    assert res.q1 >= 3


def test_convexify_kinked_max():
    res = convexify(T, np.maximum(T, T**3), 1, 3)
    assert res.equiv_constant <= 2
    assert is_convex_on_grid(T, res.profile.value(T))


def test_convexify_output_is_inc_p_dec_q1():
    psi = T**2 * (2 + np.sin(np.log(T)))
    res = convexify(T, psi, 1.5, 3)
    phi = res.phi()
    grid = SampleGrid(t=T)
    assert check_condition(phi, "Inc", 1.5, grid).passed
    assert check_condition(phi, "Dec", res.q1, grid).passed


def test_convexify_rejects_sublinear_input():
    with pytest.raises(ConvexificationError):
        convexify(T, np.sqrt(T), 1, 2)
    with pytest.raises(ConvexificationError):
        convexify(T, T[::-1], 1, 2)


@settings(max_examples=25, deadline=None)
@given(p=st.floats(1.0, 3.0), extra=st.floats(0.0, 2.0), a=st.floats(0.0, 5.0))
def test_convexify_sum_of_powers(p, extra, a):
    q = p + extra
    psi = T**p + a * T**q
    res = convexify(T, psi, p, q)
    assert is_convex_on_grid(T, res.profile.value(T))
    assert res.equiv_constant == pytest.approx(1.0, abs=1e-9)


# build_growth_function


def test_certificate_p2(cert2):
    assert cert2.p1 == 2.0 and cert2.q1 == pytest.approx(2.0)
    assert cert2.nu == pytest.approx(cert2.Lambda, rel=1e-9)
    # closed form: int_0^t s ds
    assert np.allclose(cert2.phi.eval(None, np.array([1.0, 2.0])), [0.5, 2.0])
    assert cert2.equiv_constant["c1"] == pytest.approx(2.0, rel=1e-9)
    assert cert2.equiv_constant["c2"] == pytest.approx(1.0, rel=1e-9)


def test_certificate_p3(cert3):
    t = np.array([0.3, 1.0, 4.0])
    assert np.allclose(cert3.phi.deriv(None, t), 2 * t**2)
    assert cert3.nu / cert3.Lambda == pytest.approx(0.5, abs=1e-6)


def test_certificate_conditions_pass(cert2, cert3):
    for cert in (cert2, cert3):
        assert all(r.passed for r in cert.conditions.values())
        assert check_condition(cert.phi, "Inc", cert.p1, SampleGrid(t=T)).passed
        assert check_condition(cert.phi, "Dec", cert.q1, SampleGrid(t=T)).passed


def test_degenerate_double_phase_matches_p_laplace(cert2):
    dp = build_growth_function(build_model(ModelSpec("double_phase", {"p": 2, "q": 3, "a": 0.0})))
    # F = t^2 has twice the field of the p = 2 Laplacian
    assert dp.nu / dp.Lambda == pytest.approx(cert2.nu / cert2.Lambda, abs=1e-6)
    assert np.allclose(dp.phi.eval(None, T), 2 * cert2.phi.eval(None, T), rtol=1e-6)


def test_radial_ratio_matches_eigen_oracle():
    # double phase with a constant coefficient is radial: A = g(t) xi/t, g = 2t + 3a t^2
    a = 0.7
    cert = build_growth_function(build_model(ModelSpec("double_phase", {"p": 2, "q": 3, "a": a})))
    t = cert.grid["t_min"] * (cert.grid["t_max"] / cert.grid["t_min"]) ** np.linspace(0, 1, cert.grid["t_points"])
    g = 2 * t + 3 * a * t**2
    gp = 2 + 6 * a * t
    lo, hi = np.minimum(g, gp * t), np.maximum(g, gp * t)
    dphi = cert.phi.deriv(None, t)
    assert cert.nu / cert.Lambda == pytest.approx((lo / dphi).min() / (hi / dphi).max(), abs=1e-6)


@settings(max_examples=8, deadline=None)
@given(c=st.floats(0.1, 10.0))
def test_certificate_is_one_homogeneous(c, cert3):
    scaled = build_growth_function(p_laplace(3).field.scaled(c))
    assert np.allclose(scaled.phi.deriv(None, T), c * cert3.phi.deriv(None, T), rtol=1e-9)
    assert scaled.nu / scaled.Lambda == pytest.approx(cert3.nu / cert3.Lambda, rel=1e-9)


def test_nonautonomous_certificate_records_points():
    F = build_model(ModelSpec("variable_exponent", {"p": {"kind": "linear", "c0": 2.0, "slope": 0.3}}))
    cert = build_growth_function(F, directions=16)
    assert len(cert.grid["x_points"]) == 9
    assert 0 < cert.nu <= cert.Lambda
    assert np.isfinite(cert.equiv_constant["c2"])
    x = np.array(cert.grid["x_points"][4])
    assert cert.phi.eval(x, 1.0) > 0


def test_nonpositive_ellipticity_names_sample():
    flat = VectorField(lambda x, xi: np.stack([xi[..., 0], 0 * xi[..., 1]], -1),
                       lambda x, xi: np.broadcast_to(np.diag([1.0, 0.0]), xi.shape + (2,)).copy(),
                       p=2, q=2, autonomous=True, name="flat")
    with pytest.raises(GrowthError) as err:
        build_growth_function(flat, directions=16)
    assert err.value.sample is not None


# equivalences and monotonicity


def test_equivalences_p2(cert2):
    rep = check_equivalences(cert2)
    assert rep.c1 == pytest.approx(2.0, rel=1e-9)
    assert rep.c2 == pytest.approx(1.0, rel=1e-9)
    assert rep.integral_identity_residual < 1e-12


def test_monotonicity_identity_map(cert2):
    rep = check_monotonicity(p_laplace(2).field, cert2)
    assert rep.constant == pytest.approx(1.0, abs=1e-12)


def test_monotonicity_collinear_p3(cert3):
    rng = np.random.default_rng(3)
    a, b = rng.uniform(-5, 5, 500), rng.uniform(-5, 5, 500)
    e = np.array([0.6, 0.8])
    rep = check_monotonicity(p_laplace(3).field, cert3, pairs=(a[:, None] * e, b[:, None] * e))
    # 1D oracle: (a|a| - b|b|)(a - b) / (2 (|a|+|b|) (a - b)^2)
    oracle = ((a * np.abs(a) - b * np.abs(b)) / (2 * (np.abs(a) + np.abs(b)) * (a - b))).min()
    assert rep.constant == pytest.approx(oracle, rel=1e-9)
    assert rep.constant >= 0.25 - 1e-12


def test_monotonicity_equal_pairs_are_skipped(cert2):
    xi = np.array([[1.0, 2.0]])
    assert check_monotonicity(p_laplace(2).field, cert2, pairs=(xi, xi)).pairs == 0


def test_monotonicity_failure_raises(cert2):
    neg = p_laplace(2).field.scaled(-1.0)
    with pytest.raises(MonotonicityError):
        check_monotonicity(neg, cert2, n_pairs=10)
