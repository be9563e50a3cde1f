import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orliczlab.errors import ProbeError
from orliczlab.growth import build_growth_function
from orliczlab.phi_core import power
from orliczlab.probes import (
    DEFAULT_SIGMA_GRID,
    default_radii,
    higher_integrability,
    holder_exponent,
    lemma61_suite,
    luxemburg_norm,
)
from orliczlab.solver import GridFunction, comparison_experiment, discrete_gradient, minimize
from orliczlab.structures import ModelSpec, build_model

C = np.array([0.5, 0.5])
HALF_SQUARE = power(2, 0.5)


def cone(alpha, N=64, center=C):
    return GridFunction.from_function(lambda x: np.linalg.norm(x - center, axis=-1) ** alpha, N=N)


def strip(k, N=64, width=1 / 64):
    """Slope k confined to a strip of the given width right of x1 = 1/2."""
    return GridFunction.from_function(
        lambda x: 0.01 * x[..., 1] + k * width * np.clip((x[..., 0] - 0.5) / width, 0, 1), N=N)


# holder_exponent


@pytest.mark.parametrize("alpha", [0.3, 0.5, 1.0])
def test_recovers_synthetic_exponent(alpha):
    rep = holder_exponent(cone(alpha))
    assert abs(rep.alpha - alpha) <= 0.05
    assert rep.band[0] <= rep.alpha + 1e-9
    assert len(rep.table) == 6


def test_constant_field_flags_zero_oscillation():
    rep = holder_exponent(GridFunction(np.full((65, 65), 2.0)))
    assert rep.alpha == 1.0 and rep.flags == ["zero_oscillation"]
    assert all(o == 0.0 for _, o in rep.table)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(0.1, 10.0), b=st.floats(-5, 5))
def test_exponent_invariant_under_affine_maps_of_values(a, b):
    f = cone(0.5)
    g = GridFunction(a * f.values + b, f.origin, f.length)
    assert holder_exponent(g).alpha == pytest.approx(holder_exponent(f).alpha, abs=1e-9)


def test_gradient_excess_of_smooth_field_decays_linearly():
    u = GridFunction.from_function(lambda x: x[..., 0] + 0.5 * x[..., 0] ** 2 + x[..., 1] ** 2, N=128)
    rep = holder_exponent(u, target="Du")
    assert rep.alpha == pytest.approx(1.0, abs=0.05)


def test_radii_validation():
    f = cone(0.5)
    with pytest.raises(ProbeError, match="4 radii"):
        holder_exponent(f, radii=[0.1, 0.2, 0.4])
    with pytest.raises(ProbeError, match="decade"):
        holder_exponent(f, radii=np.geomspace(0.1, 0.5, 5))
    with pytest.raises(ProbeError, match="4h"):
        holder_exponent(f, radii=np.geomspace(0.01, 0.4, 5))
    with pytest.raises(ProbeError):
        holder_exponent(f, target="v")
    # a coarse grid cannot resolve a decade starting at 4h
    with pytest.raises(ProbeError):
        holder_exponent(cone(0.5, N=32))


def test_default_radii_stay_in_domain():
    u = cone(0.5, N=64)
    r = default_radii(u, C)
    assert r[0] == pytest.approx(4 / 64)
    assert r[-1] <= np.hypot(0.5, 0.5) + 1e-12
    assert r[-1] / r[0] >= 10 - 1e-9


def test_off_centre_singularity():
    # the centre must be a node, otherwise the ball minimum is not the singular value
    c = np.array([0.375, 0.625])
    rep = holder_exponent(cone(0.3, N=128, center=c), center=c, radii=np.geomspace(4 / 128, 0.35, 6))
    assert abs(rep.alpha - 0.3) <= 0.05


# higher_integrability


def test_affine_top_sigma():
    u = GridFunction.from_function(lambda x: 0.3 * x[..., 0] - 0.2 * x[..., 1], N=32)
    rep = higher_integrability(HALF_SQUARE, u)
    assert rep.sigma_measured == DEFAULT_SIGMA_GRID[-1]
    assert np.ptp(rep.lhs) < 1e-12


def test_harmonic_quadratic_is_finite_and_below_cap():
    u = GridFunction.from_function(lambda x: 0.5 * (x[..., 0] ** 2 - x[..., 1] ** 2), N=32)
    rep = higher_integrability(HALF_SQUARE, u)
    assert rep.caps_ok
    assert rep.sigma_measured > 0 and rep.ratio < rep.cap
    # direct quadrature of the top power mean
    t = np.linalg.norm(discrete_gradient(u), axis=-1)[8:24, 8:24]
    assert rep.lhs[-1] == pytest.approx(np.mean((t**2 / 2) ** 2) ** 0.5, rel=1e-12)


def test_gradient_strip_lowers_sigma():
    sig = [higher_integrability(HALF_SQUARE, strip(k), check_caps=False).sigma_measured for k in (5, 15, 20, 30)]
    assert sig == sorted(sig, reverse=True)
    assert sig[2] <= 0.2 and sig[3] == 0.0


def test_caps_enforced():
    with pytest.raises(ProbeError, match="Luxemburg"):
        higher_integrability(HALF_SQUARE, strip(30))


def test_explicit_ball_must_fit():
    u = cone(1.0, N=32)
    with pytest.raises(ProbeError):
        higher_integrability(HALF_SQUARE, u, ball=(C, 0.3))
    rep = higher_integrability(HALF_SQUARE, u, ball=(C, 0.2), check_caps=False)
    assert rep.measure_B2r == pytest.approx(np.pi * 0.16)


@settings(max_examples=20, deadline=None)
@given(k=st.floats(0.5, 40.0), p=st.floats(1.5, 4.0))
def test_power_means_nondecreasing(k, p):
    rep = higher_integrability(power(p), strip(k, N=32, width=1 / 32), check_caps=False)
    lhs = np.array(rep.lhs)
    assert np.all(np.diff(lhs) >= -1e-12 * lhs[1:])


def test_luxemburg_norm_of_power():
    # phi = t^2/2 and |Du| = g constant on the unit square: norm = g / sqrt(2)
    u = GridFunction.from_function(lambda x: 3.0 * x[..., 0], N=16)
    mask = np.ones((16, 16), dtype=bool)
    assert luxemburg_norm(HALF_SQUARE, u, mask) == pytest.approx(3 / np.sqrt(2), rel=1e-8)


# lemma61_suite


def test_lemma61_autonomous_identity_pair():
    F = build_model(ModelSpec("p_laplace", {"p": 2.0}))
    u, _ = minimize(F, lambda x: 1.2 * x[..., 0] + 0.3 * x[..., 1] ** 2, N=32)
    inner = u.sub_square(8, 16)
    rep = lemma61_suite(HALF_SQUARE, HALF_SQUARE, u, inner, sigma=0.5)
    assert rep.passed
    assert rep.item1["holder_exact"] and rep.item2["holder_exact"]
    assert rep.constants["item3"] <= 1.0
    assert rep.constants["item1_approx"] == pytest.approx(1.0)


def test_lemma61_rejects_misaligned_pair():
    u = cone(1.0, N=32)
    with pytest.raises(ProbeError):
        lemma61_suite(HALF_SQUARE, None, u, cone(1.0, N=16))


def test_lemma61_constants_stable_across_radii():
    F = build_model(ModelSpec("variable_exponent",
                              {"p": {"kind": "holder_bump", "base": 2.0, "amp": 0.3, "beta": 0.3}}))
    cert = build_growth_function(F, directions=16)
    consts = [comparison_experiment(F, cert, r=r, N=16, omega=lambda s: s**0.3, sigma=0.5).lemma61["constants"]
              for r in (0.2, 0.1)]
    for key in consts[0]:
        a, b = consts[0][key], consts[1][key]
        assert np.isfinite(a) and np.isfinite(b)
        assert max(a, b) / min(a, b) < 2.0, key
