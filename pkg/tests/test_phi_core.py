import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orliczlab.errors import EvaluationError, ParameterError, RangeError
from orliczlab.phi_core import (
    PhiFunction,
    SampleGrid,
    check_condition,
    check_prop0,
    conjugate,
    fit_split_constant,
    left_inverse,
    left_inverse_many,
    power,
    quasiconvexity_split,
    young_gap,
)


def double_phase_phi(p=3.0, q=5.0, a=1.0):
    return PhiFunction(lambda x, t: t**p + a * t**q, lambda x, t: p * t ** (p - 1) + a * q * t ** (q - 1),
                       p_lo=p, q_hi=q)


def grid_sup(phi, s, taus=np.linspace(0, 50, 2_000_001)):
    # independent oracle: brute-force supremum on a fine uniform grid
    return float(np.max(s * taus - phi.eval(None, taus)))


# check_condition


def test_square_is_inc2_with_constant_one():
    rep = check_condition(power(2), "Inc", 2)
    assert rep.passed and rep.witnessed_constant == pytest.approx(1.0, abs=1e-12)
    assert rep.counterexample is None


def test_square_fails_ainc3_with_counterexample():
    rep = check_condition(power(2), "aInc", 3)
    assert not rep.passed
    x, t, s = rep.counterexample
    assert t < s
    assert s**2 / s**3 < t**2 / t**3


def test_double_phase_with_coefficient_field_is_inc_p():
    a = np.array([0.0, 0.3, 1.0, 2.5])
    phi = PhiFunction(lambda x, t: t**2 + x[..., 0] * t**3, autonomous=False, p_lo=2, q_hi=3)
    grid = SampleGrid(t=np.logspace(-4, 4, 161), x=np.stack([a, a], -1))
    assert check_condition(phi, "Inc", 2, grid).passed
    assert check_condition(phi, "Dec", 3, grid).passed
    # brute-force oracle over the same sample: ratio nondecreasing
    for ai in a:
        r = (grid.t**2 + ai * grid.t**3) / grid.t**2
        assert np.all(np.diff(r) >= 0)


def test_a0_constant():
    rep = check_condition(power(2, scale=0.25), "A0", L=4)
    assert rep.passed and rep.witnessed_constant == pytest.approx(4.0)
    assert not check_condition(power(2, scale=0.25), "A0", L=2).passed


def test_nonfinite_evaluation_names_point():
    phi = PhiFunction(lambda x, t: np.where(t > 10, np.inf, t**2))
    with pytest.raises(EvaluationError) as err:
        check_condition(phi, "Inc", 1)
    assert err.value.t > 10


def test_grid_must_span_two_decades():
    with pytest.raises(ParameterError):
        SampleGrid(t=np.linspace(1, 50, 10))


@settings(max_examples=25, deadline=None)
@given(gamma=st.floats(1.0, 4.0), drop=st.floats(0.0, 1.0))
def test_inc_passes_imply_weaker_ainc(gamma, drop):
    phi = power(gamma)
    assert check_condition(phi, "Inc", gamma).passed
    assert check_condition(phi, "aInc", gamma - drop, L=1.0).passed


# left inverse


def test_left_inverse_examples():
    assert left_inverse(power(2), None, 4) == pytest.approx(2.0, rel=1e-12)
    assert left_inverse(power(2), None, 0) == 0.0
    phi = PhiFunction(lambda x, t: t**3 + t**5)
    assert left_inverse(phi, None, 2) == pytest.approx(1.0, abs=1e-10)


def test_left_inverse_out_of_range():
    with pytest.raises(RangeError):
        left_inverse(power(2), None, 1e20, hi=10.0)


@settings(max_examples=40, deadline=None)
@given(t=st.floats(1e-4, 1e4))
def test_left_inverse_undoes_eval(t):
    phi = double_phase_phi(2.0, 3.5)
    assert left_inverse(phi, None, float(phi.eval(None, t))) == pytest.approx(t, rel=1e-9)


def test_left_inverse_many_matches_scalar():
    phi = double_phase_phi()
    levels = np.array([0.0, 1e-3, 2.0, 7.5, 1e4])
    tau, reached = left_inverse_many(lambda t: phi.eval(None, t), levels)
    assert np.all(reached)
    for lv, tv in zip(levels, tau):
        assert tv == pytest.approx(left_inverse(phi, None, lv), rel=1e-9, abs=1e-12)


# conjugate and Young


def test_conjugate_examples():
    assert conjugate(power(2, 0.5), None, 3) == pytest.approx(4.5, rel=1e-10)
    assert conjugate(power(1), None, 0.7) == pytest.approx(0.0, abs=1e-12)
    cube = power(3, 1 / 3)
    assert conjugate(cube, None, 1) == pytest.approx(2 / 3, rel=1e-10)
    assert conjugate(cube, None, 1) == pytest.approx(grid_sup(cube, 1.0), abs=1e-9)


def test_young_gap_examples():
    half = power(2, 0.5)
    assert young_gap(half, None, 1, 1) == pytest.approx(0.0, abs=1e-10)
    assert young_gap(half, None, 2, 1) == pytest.approx(0.5, rel=1e-10)
    assert young_gap(power(3, 1 / 3), None, 1, 1) == pytest.approx(0.0, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(t=st.floats(1e-3, 1e2), s=st.floats(1e-3, 1e2))
def test_young_gap_nonnegative(t, s):
    assert young_gap(double_phase_phi(2.0, 3.0), None, t, s) >= -1e-8


def test_conjugate_growth_exponents():
    # phi in aInc(p) and aDec(q) gives phi* in aInc(q/(q-1)) and aDec(p/(p-1))
    p, q = 2.0, 3.0
    phi = double_phase_phi(p, q)
    s = np.logspace(-2, 3, 41)
    star = np.array([conjugate(phi, None, v) for v in s])
    table = PhiFunction(lambda x, t: np.interp(np.log(t), np.log(s), star))
    grid = SampleGrid(t=s)
    assert check_condition(table, "aInc", q / (q - 1), grid, L=1 + 1e-6).passed
    assert check_condition(table, "aDec", p / (p - 1), grid, L=1 + 1e-6).passed


# Proposition-style checks


def test_prop0_power():
    rep = check_prop0(power(3))
    c = rep.items["equivalence"].constants
    assert c["ratio_min"] == pytest.approx(3.0) and c["ratio_max"] == pytest.approx(3.0)


def test_prop0_square_conjugate_bound():
    rep = check_prop0(power(2, 0.5))
    assert rep.passed
    assert rep.items["conjugate_bound"].constants["worst_ratio"] == pytest.approx(0.5, rel=1e-8)


def test_prop0_double_phase_ratio_range():
    c = check_prop0(double_phase_phi()).items["equivalence"].constants
    assert 3 - 1e-9 <= c["ratio_min"] <= c["ratio_max"] <= 5 + 1e-9


def test_split_examples():
    assert quasiconvexity_split(power(2), (1, 1), (1, 1), 1.0).ratio == 0.0
    res = quasiconvexity_split(power(2), (1, 0), (0, 0), 1.0)
    assert res.lhs == pytest.approx(1.0) and res.rhs == pytest.approx(3.0)


def test_split_constant_uniform_for_cube():
    rng = np.random.default_rng(7)
    pairs = [(rng.normal(size=2) * 10 ** rng.uniform(-2, 2), rng.normal(size=2) * 10 ** rng.uniform(-2, 2))
             for _ in range(2000)]
    kappas = [0.1, 0.5, 1.0]
    c_all = fit_split_constant(power(3), pairs, kappas)
    c_half = fit_split_constant(power(3), pairs[:1000], kappas)
    assert np.isfinite(c_all) and c_all < 50
    assert c_half <= c_all and c_half > 0.5 * c_all


@settings(max_examples=30, deadline=None)
@given(t=st.floats(1e-3, 1e3))
def test_numeric_derivative_consistent(t):
    phi = PhiFunction(lambda x, u: u**2.5 + u**3)
    assert phi.deriv(None, t) == pytest.approx(2.5 * t**1.5 + 3 * t**2, rel=1e-6)
