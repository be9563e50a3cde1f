"""Autonomous approximants of a growth function, a field and a Lagrangian near a point.

Given thresholds ``t1 < 1 < t2`` and a frozen point ``x0``, ``phibar`` keeps
``phi'(x0, .)`` on ``[t1, t2]`` and continues it by pure powers outside.  The
field and Lagrangian approximants glue ``A(x0, .)`` / ``F(x0, .)`` to power
laws with smooth cutoffs, so they agree with the frozen model on the annulus
``2 t1 <= |xi| <= t2/2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CalibrationError, GrowthError, ParameterError
from .growth import GrowthCertificate
from .phi_core import PhiFunction, SampleGrid, check_condition, left_inverse_many
from .structures import Lagrangian, VectorField, jacobian_extremes, sphere_directions

LEG_X, LEG_W = np.polynomial.legendre.leggauss(40)


# ---------------------------------------------------------------------------
# transition functions


def _cubic(s):
    s = np.clip(s, 0.0, 1.0)
    return 3 * s**2 - 2 * s**3, 6 * s * (1 - s), 6 - 12 * s


def _quintic(s):
    s = np.clip(s, 0.0, 1.0)
    return 10 * s**3 - 15 * s**4 + 6 * s**5, 30 * s**2 * (1 - s) ** 2, 60 * s * (1 - s) * (1 - 2 * s)


class Transition:
    """A scalar function of ``t >= 0`` with first and second derivatives."""

    def __init__(self, fn, name):
        self._fn = fn
        self.name = name

    def __call__(self, t):
        return self._fn(np.asarray(t, dtype=float))[0]

    def derivs(self, t):
        return self._fn(np.asarray(t, dtype=float))

    def combination_bound(self, t):
        """``eta + t |eta'| + t^2 |eta''|`` on the given points."""
        v, d1, d2 = self.derivs(t)
        t = np.asarray(t, dtype=float)
        return v + t * np.abs(d1) + t**2 * np.abs(d2)


def cutoff(start, smooth=_cubic):
    """1 on ``[0, start)``, 0 on ``[2 start, inf)``, smooth decreasing in between."""

    def fn(t):
        inside = (t > start) & (t < 2 * start)
        v, d1, d2 = smooth((t - start) / start)
        return (1 - v, np.where(inside, -d1 / start, 0.0), np.where(inside, -d2 / start**2, 0.0))

    return Transition(fn, f"cutoff({start:g})")


def ramp(t2):
    """0 on ``[0, t2/2)``, 1 on ``[t2, inf)``, cubic in between (field case)."""
    half = 0.5 * t2

    def fn(t):
        inside = (t > half) & (t < t2)
        v, d1, d2 = _cubic((t - half) / half)
        return v, np.where(inside, d1 / half, 0.0), np.where(inside, d2 / half**2, 0.0)

    return Transition(fn, f"ramp({t2:g})")


def _ramp_integrand(v):
    return 4.0 * _quintic(v)[0] / (2.0 + v) ** 2


RAMP_TOTAL = float(0.5 * np.sum(LEG_W * _ramp_integrand(0.5 * (LEG_X + 1.0))))


def h_profile(t2):
    """``h`` increasing from 0 on ``[0, t2/2]`` to ``t2`` on ``[3 t2/4, inf)``; returns (h, h')."""

    def fn(t):
        t = np.asarray(t, dtype=float)
        v, d1, _ = _quintic((t - 0.5 * t2) / (0.25 * t2))
        return t2 * v, 4.0 * d1

    return fn


def integral_ramp(t2):
    """``eta3(t) = int_0^t h(s)/s^2 ds`` (Lagrangian case), in closed form past ``3 t2/4``."""
    h = h_profile(t2)

    def fn(t):
        t = np.asarray(t, dtype=float)
        u = np.clip(4.0 * t / t2 - 2.0, 0.0, 1.0)
        nodes = 0.5 * (LEG_X + 1.0)
        partial = 0.5 * u * np.sum(LEG_W * _ramp_integrand(u[..., None] * nodes), axis=-1)
        safe = np.where(t > 0, t, 1.0)
        tail = RAMP_TOTAL + 4.0 / 3.0 - t2 / safe
        val = np.where(t >= 0.75 * t2, tail, partial)
        hv, hd = h(t)
        d1 = np.where(t > 0, hv / safe**2, 0.0)
        d2 = np.where(t > 0, hd / safe**2 - 2 * hv / safe**3, 0.0)
        return val, d1, d2

    return Transition(fn, f"integral_ramp({t2:g})")


def lambda_bar(p, q1, Lambda):
    """``2^(q1 - p + 3) Lambda / min(p - 1, 1)``."""
    return 2.0 ** (q1 - p + 3) * Lambda / min(p - 1.0, 1.0)


# ---------------------------------------------------------------------------
# phibar


class PhiBar(PhiFunction):
    """Autonomous growth function: power law below ``t1``, ``phi(x0, .)`` on ``[t1, t2]``, power law above."""

    def __init__(self, phi: PhiFunction, x0, t1, t2, p, q1):
        if not t1 < t2:
            raise ParameterError(f"need t1 < t2, got t1={t1}, t2={t2}")
        if t1 <= 0:
            raise ParameterError("t1 must be positive")
        self.base, self.t1, self.t2, self.p, self.q1 = phi, float(t1), float(t2), float(p), float(q1)
        self.x0 = None if x0 is None else np.asarray(x0, dtype=float)
        at = lambda f, t: float(np.asarray(f(self.x0, np.array([t])))[0])
        self.a1 = at(phi.deriv, self.t1)
        self.a2 = at(phi.deriv, self.t2)
        self._phi_t1 = at(phi.eval, self.t1)
        self._phi_t2 = at(phi.eval, self.t2)
        self._low_t1 = self.a1 * self.t1 / self.p
        self._mid_t2 = self._low_t1 + self._phi_t2 - self._phi_t1
        super().__init__(self._value, self._deriv_value, p_lo=p, q_hi=q1, autonomous=True, name="phibar")

    def _frozen(self, f, t):
        return np.asarray(f(self.x0, t), dtype=float)

    def _value(self, _x, t):
        t = np.asarray(t, dtype=float)
        p = self.p
        low = self.a1 * t**p / (p * self.t1 ** (p - 1))
        mid_t = np.clip(t, self.t1, self.t2)
        mid = self._low_t1 + self._frozen(self.base.eval, mid_t) - self._phi_t1
        high = self._mid_t2 + self.a2 * (t**p - self.t2**p) / (p * self.t2 ** (p - 1))
        return np.where(t <= self.t1, low, np.where(t <= self.t2, mid, high))

    def _deriv_value(self, _x, t):
        t = np.asarray(t, dtype=float)
        p = self.p
        mid = self._frozen(self.base.deriv, np.clip(t, self.t1, self.t2))
        return np.where(t <= self.t1, self.a1 * (t / self.t1) ** (p - 1),
                        np.where(t <= self.t2, mid, self.a2 * (t / self.t2) ** (p - 1)))

    def inverse(self, s):
        s = np.asarray(s, dtype=float)
        tau, _ = left_inverse_many(lambda t: self.eval(None, t), s, lo=1e-14, hi=1e14)
        return tau

    def continuity_gaps(self):
        """Relative jumps of ``phibar'`` at ``t1`` and ``t2``."""
        out = []
        for t in (self.t1, self.t2):
            lo = float(self.deriv(None, np.array([t * (1 - 1e-13)]))[0])
            hi = float(self.deriv(None, np.array([t * (1 + 1e-13)]))[0])
            out.append(abs(hi - lo) / max(abs(hi), 1e-300))
        return tuple(out)


def _phi_of(cert):
    if isinstance(cert, GrowthCertificate):
        return cert.phi, cert.p1, cert.q1
    if isinstance(cert, PhiFunction):
        if cert.p_lo is None:
            raise ParameterError("PhiFunction needs a declared p_lo")
        return cert, cert.p_lo, cert.q_hi if cert.q_hi is not None else cert.p_lo
    raise ParameterError("expected a GrowthCertificate or PhiFunction")


def build_phibar(cert, x0, t1, t2) -> PhiBar:
    """``phibar`` for a certificate (or a PhiFunction with declared exponents) frozen at ``x0``."""
    phi, p, q1 = _phi_of(cert)
    return PhiBar(phi, None if phi.autonomous else x0, t1, t2, p, q1)


def ball_points(x0, r, rings=(1.0, 0.5), count=8):
    x0 = np.asarray(x0, dtype=float)
    pts = [x0]
    for frac in rings:
        ang = 2 * np.pi * (np.arange(count) + 0.5) / count
        pts.extend(x0 + frac * r * np.stack([np.cos(ang), np.sin(ang)], axis=-1))
    pts = np.array(pts)
    return pts[np.all((pts >= 0) & (pts <= 1), axis=-1)]


def ball_extremes(phi, points, t):
    vals = np.stack([np.broadcast_to(phi.eval(None if phi.autonomous else x, t), t.shape) for x in points])
    return vals.min(axis=0), vals.max(axis=0)


def thresholds(cert, x0, r, omega_r, clamp=True):
    """``t1 = (phi^-_B)^-1(omega(r))`` and ``t2 = (phi^-_B)^-1(|B_r|^-1)``.

    With ``clamp`` the pair is pushed into ``t1 <= 1/2`` and ``t2 >= 2``.
    """
    phi, _, _ = _phi_of(cert)
    pts = ball_points(x0, r)
    lower = lambda t: ball_extremes(phi, pts, np.asarray(t, float))[0]
    levels = np.array([omega_r, 1.0 / (np.pi * r**2)])
    (t1, t2), _ = left_inverse_many(lower, levels)
    if clamp:
        t1, t2 = min(float(t1), 0.5), max(float(t2), 2.0)
    return float(t1), float(t2)


# ---------------------------------------------------------------------------
# Proposition-style checks for phibar


@dataclass
class PhiBarReport:
    hypothesis_constant: float
    Ltilde: float
    conditional_fail: bool
    items: dict
    witnesses: dict = field(default_factory=dict)

    @property
    def passed(self):
        return not self.conditional_fail and all(it["passed"] for it in self.items.values())

    def to_dict(self):
        return {"hypothesis_constant": self.hypothesis_constant, "Ltilde": self.Ltilde,
                "conditional_fail": self.conditional_fail, "passed": self.passed, "items": self.items}


def check_prop_phibar(cert, phibar: PhiBar, Ltilde=None, r=0.1, t=None, tol=1e-9):
    """Check the four properties of ``phibar`` on the ball ``B_r(x0)``.

    1. ``phibar'`` is C^0 and satisfies (Inc)_{p-1}, (Dec)_{q1-1} with constant 1.
    2. ``phibar <= (q1/p) phi(x0, .)`` and ``phi(x, .) <= Ltilde phibar`` on ``[t1, t2]``
       (the factor is 1 exactly when ``phi'(x0, .)`` is a pure ``p-1`` power below ``t1``).
    3. ``phibar <= (q1/p) Ltilde phi(x, .)`` on ``[t1, inf)``.
    4. ``theta0(x, s) = phi(x, phibar^-1(s))`` satisfies (A0), (aInc)_1, (aDec)_{q1/p}.

    The hypothesis ``phi^+_B <= Ltilde phi^-_B`` on ``[t1, t2]`` is measured
    first; with ``Ltilde=None`` the measured constant is used.
    """
    phi, p, q1 = _phi_of(cert)
    x0 = phibar.x0 if phibar.x0 is not None else np.array([0.5, 0.5])
    pts = ball_points(x0, r)
    t = np.logspace(-4, 4, 161) if t is None else np.asarray(t, float)
    t = np.unique(np.concatenate([t, [phibar.t1, phibar.t2]]))
    mid = (t >= phibar.t1) & (t <= phibar.t2)
    lo, hi = ball_extremes(phi, pts, t)
    hyp = float(np.max(hi[mid] / lo[mid]))
    L = hyp if Ltilde is None else float(Ltilde)
    items = {}

    # 1
    grid = SampleGrid(t=t)
    d = phibar.derivative_function(L=1.0)
    inc = check_condition(d, "Inc", p - 1.0, grid=grid, L=1.0)
    dec = check_condition(d, "Dec", q1 - 1.0, grid=grid, L=1.0)
    gaps = phibar.continuity_gaps()
    items["1"] = {"passed": bool(inc.passed and dec.passed and max(gaps) < 1e-9),
                  "inc_constant": inc.witnessed_constant, "dec_constant": dec.witnessed_constant,
                  "derivative_gaps": list(gaps)}

    # 2
    pb = phibar.eval(None, t)
    frozen = np.broadcast_to(phi.eval(None if phi.autonomous else x0, t), t.shape)
    upper = float(np.max(pb[mid] / frozen[mid]))
    lower = float(np.max(hi[mid] / (L * pb[mid])))
    # phibar - phi(x0, .) is constant on [t1, t2] and equals phibar(t1) - phi(x0, t1) >= 0, which
    # (Dec)_{q1-1} bounds by (q1/p - 1) phi(x0, t1); the gap vanishes only for a pure p-power below t1
    offset = pb[mid] - frozen[mid]
    items["2"] = {"passed": upper <= q1 / p * (1 + tol) and lower <= 1 + tol,
                  "max_phibar_over_frozen": upper, "upper_bound": q1 / p, "literal_upper_holds": upper <= 1 + tol,
                  "middle_offset_spread": float(np.ptp(offset) / max(frozen[mid].max(), 1e-300)),
                  "max_phi_over_Ltilde_phibar": lower}

    # 3
    tail = t >= phibar.t1
    factor = float(np.max(pb[tail] / lo[tail]))
    bound = q1 / p * L
    items["3"] = {"passed": factor <= bound * (1 + tol), "factor": factor, "bound": bound}

    # 4
    s = np.logspace(-4, 4, 121)
    theta = PhiFunction(lambda x, v: phi.eval(x, phibar.inverse(v)), autonomous=phi.autonomous, name="theta0")
    sgrid = SampleGrid(t=s, x=None if phi.autonomous else pts)
    cap = 4.0 * (q1 / p) * L**2
    a0 = check_condition(theta, "A0", grid=sgrid, L=cap)
    ainc = check_condition(theta, "aInc", 1.0, grid=sgrid, L=cap)
    adec = check_condition(theta, "aDec", q1 / p, grid=sgrid, L=cap)
    items["4"] = {"passed": bool(a0.passed and ainc.passed and adec.passed), "cap": cap,
                  "A0": a0.witnessed_constant, "aInc1": ainc.witnessed_constant,
                  "aDec_q1_over_p": adec.witnessed_constant}
    return PhiBarReport(hyp, L, Ltilde is not None and hyp > L * (1 + tol), items)


# ---------------------------------------------------------------------------
# bundle and the field / Lagrangian approximants


@dataclass
class ApproximationBundle:
    x0: Optional[np.ndarray]
    r: Optional[float]
    t1: float
    t2: float
    a1: float
    a2: float
    p: float
    q1: float
    nu: float
    Lambda: float
    LambdaBar: float
    nuBar: Optional[float]
    etas: dict
    phibar: PhiBar
    abar: Optional[VectorField] = None
    fbar: Optional[Lagrangian] = None
    calibration: list = field(default_factory=list)

    def to_dict(self):
        return {"x0": None if self.x0 is None else self.x0.tolist(), "r": self.r, "t1": self.t1, "t2": self.t2,
                "a1": self.a1, "a2": self.a2, "p": self.p, "q1": self.q1, "nu": self.nu, "Lambda": self.Lambda,
                "LambdaBar": self.LambdaBar, "nuBar": self.nuBar, "calibration": self.calibration}


def _unit(xi):
    t = np.linalg.norm(xi, axis=-1)
    safe = np.where(t > 0, t, 1.0)
    return xi / safe[..., None], t, safe


def _frozen_point(x0, shape):
    return np.broadcast_to(np.asarray(x0 if x0 is not None else (0.5, 0.5), float), shape + (2,))


def build_abar(A: VectorField, cert: GrowthCertificate, x0, t1, t2, r=None):
    """Field approximant and its bundle.

    The low and high terms are ``eta(|xi|) c |xi|^(p-2) xi`` with
    ``c = a1/t1^(p-1)`` (weight ``nu/8``) and ``c = a2/t2^(p-1)`` (weight
    ``LambdaBar``); the middle term is ``eta2(|xi|) A(x0, xi)``.
    """
    if cert is None:
        raise ParameterError("a growth certificate is required")
    phibar = build_phibar(cert, x0, t1, t2)
    p, q1 = cert.p1, cert.q1
    nu, Lam = cert.nu, cert.Lambda_growth
    LB = lambda_bar(p, q1, Lam)
    e1, e2, e3 = cutoff(t1), cutoff(t2), ramp(t2)
    c_lo = nu / 8.0 * phibar.a1 / t1 ** (p - 1)
    c_hi = LB * phibar.a2 / t2 ** (p - 1)
    xf = None if A.autonomous else np.asarray(x0, float)

    def ev(_x, xi):
        xi = np.asarray(xi, float)
        e, t, safe = _unit(xi)
        power = np.where(t > 0, safe ** (p - 2), 0.0)[..., None] * xi
        frozen = A.eval(_frozen_point(xf, xi.shape[:-1]), xi)
        return (c_lo * e1(t))[..., None] * power + e2(t)[..., None] * frozen + (c_hi * e3(t))[..., None] * power

    def jac(_x, xi):
        xi = np.asarray(xi, float)
        e, t, safe = _unit(xi)
        n = xi.shape[-1]
        outer = e[..., :, None] * e[..., None, :]
        eye = np.eye(n)

        def power_jac(eta):
            v, d1, _ = eta.derivs(t)
            tp = safe ** (p - 1)
            return (d1 * tp)[..., None, None] * outer + (v * safe ** (p - 2))[..., None, None] * (
                (p - 2) * outer + eye)

        xp = _frozen_point(xf, xi.shape[:-1])
        v2, d2, _ = e2.derivs(t)
        a = A.eval(xp, xi)
        mid = d2[..., None, None] * a[..., :, None] * e[..., None, :] + v2[..., None, None] * A.jacobian(xp, xi)
        return c_lo * power_jac(e1) + mid + c_hi * power_jac(e3)

    abar = VectorField(ev, jac, A.dim, p, q1, None, f"Abar[{A.name}]", autonomous=True)
    bundle = ApproximationBundle(None if xf is None else xf, r, float(t1), float(t2), phibar.a1, phibar.a2, p, q1,
                                 nu, Lam, LB, None, {"eta1": e1, "eta2": e2, "eta3": e3}, phibar, abar=abar)
    return abar, bundle


def _radial_term(eta, t, safe, p):
    """Value, radial derivative and second derivative of ``eta(t) t^p``."""
    v, d1, d2 = eta.derivs(t)
    g = v * t**p
    g1 = d1 * t**p + p * v * safe ** (p - 1)
    g2 = d2 * t**p + 2 * p * d1 * safe ** (p - 1) + p * (p - 1) * v * safe ** (p - 2)
    return g, g1, g2


def _fbar_parts(F, xf, p, e1, e2, e3, coef):
    lo_c, hi_c = coef

    def ev(_x, xi):
        xi = np.asarray(xi, float)
        e, t, safe = _unit(xi)
        xp = _frozen_point(xf, xi.shape[:-1])
        return (lo_c[0] * e1(t) * t**p + e2(t) * F.eval(xp, xi) + hi_c[0] * e3(t) * t**p)

    def grad(_x, xi):
        xi = np.asarray(xi, float)
        e, t, safe = _unit(xi)
        xp = _frozen_point(xf, xi.shape[:-1])
        _, g1a, _ = _radial_term(e1, t, safe, p)
        _, g1c, _ = _radial_term(e3, t, safe, p)
        v2, d2, _ = e2.derivs(t)
        radial = (lo_c[0] * g1a + hi_c[0] * g1c + d2 * F.eval(xp, xi))
        return radial[..., None] * e + v2[..., None] * F.gradient(xp, xi)

    def hess(_x, xi):
        xi = np.asarray(xi, float)
        e, t, safe = _unit(xi)
        n = xi.shape[-1]
        xp = _frozen_point(xf, xi.shape[:-1])
        outer = e[..., :, None] * e[..., None, :]
        tang = np.eye(n) - outer
        f = F.eval(xp, xi)
        gf = F.gradient(xp, xi)
        _, g1a, g2a = _radial_term(e1, t, safe, p)
        _, g1c, g2c = _radial_term(e3, t, safe, p)
        v2, d2, dd2 = e2.derivs(t)
        g1 = lo_c[0] * g1a + hi_c[0] * g1c + d2 * f
        g2 = lo_c[0] * g2a + hi_c[0] * g2c + dd2 * f
        out = g2[..., None, None] * outer + (g1 / safe)[..., None, None] * tang
        cross = e[..., :, None] * gf[..., None, :] + gf[..., :, None] * e[..., None, :]
        v2_hess = v2[..., None, None] * F.hessian(xp, xi)
        return out + d2[..., None, None] * cross + v2_hess

    return ev, grad, hess


def _case_intervals(t1, t2):
    return {"(0,t1]": (t1 * 1e-3, t1), "(t1,2t1]": (t1, 2 * t1), "(t2/2,t2]": (t2 / 2, t2), "(t2,2t2]": (t2, 2 * t2)}


def _case_samples(t1, t2, per_case=24, background=60):
    ts = [np.logspace(np.log10(t1) - 3, np.log10(t2) + 3, background)]
    for lo, hi in _case_intervals(t1, t2).values():
        ts.append(np.linspace(lo, hi, per_case + 2)[1:])
    return np.unique(np.concatenate(ts))


def _ellipticity_profile(hess_or_jac, phibar, t, dirs):
    xi = t[:, None, None] * dirs[None]
    J = hess_or_jac(None, xi)
    _, lam, _ = jacobian_extremes(J)
    return (lam * t[:, None] / phibar.deriv(None, t)[:, None]).min(axis=-1)


def build_fbar(F: Lagrangian, cert: GrowthCertificate, x0, t1, t2, r=None, nuBar=None, LambdaBar=None,
               calibrate=True, directions=16, max_steps=40):
    """Lagrangian approximant and its bundle.

    Terms: ``nuBar eta1 (a1/t1^(p-1)) |xi|^p``, ``eta2 F(x0, xi)`` and
    ``LambdaBar eta3 (a2/t2^(p-1)) |xi|^p``.  With ``calibrate`` the weights
    start at ``nu/8`` and the (field) ``LambdaBar``, are halved / doubled and
    then bisected to the loosest value for which the sampled ellipticity ratio
    ``lambda_min(D^2 Fbar) |xi| / phibar'`` is at least ``nu/2`` on ``(t1, 2 t1]`` and on ``(t2/2, inf)``.  Below ``t1``
    only the ``nuBar`` term is guaranteed to be elliptic relative to
    ``phibar'``, so no margin is imposed there.
    """
    if cert is None:
        raise ParameterError("a growth certificate is required")
    phibar = build_phibar(cert, x0, t1, t2)
    p, q1, nu = cert.p1, cert.q1, cert.nu
    e1, e2, e3 = cutoff(t1, _quintic), cutoff(t2, _quintic), integral_ramp(t2)
    nb = nu / 8.0 if nuBar is None else float(nuBar)
    LB = lambda_bar(p, q1, cert.Lambda_growth) if LambdaBar is None else float(LambdaBar)
    xf = None if F.autonomous else np.asarray(x0, float)
    lo_c, hi_c = [0.0], [0.0]

    def set_coef(nbar, lbar):
        lo_c[0] = nbar * phibar.a1 / t1 ** (p - 1)
        hi_c[0] = lbar * phibar.a2 / t2 ** (p - 1)

    set_coef(nb, LB)
    ev, grad, hess = _fbar_parts(F, xf, p, e1, e2, e3, (lo_c, hi_c))
    history = []
    if calibrate:
        dirs = sphere_directions(F.dim, directions, 0)
        t_low = np.linspace(t1, 2 * t1, 26)[1:]
        t_high = np.concatenate([np.linspace(t2 / 2, 2 * t2, 50), np.logspace(np.log10(2 * t2), np.log10(t2) + 3, 20)])
        margin = nu / 2.0
        weights = {"low": nb, "high": LB}

        def measure(side, ts, value):
            weights[side] = value
            set_coef(weights["low"], weights["high"])
            ratio = _ellipticity_profile(hess, phibar, ts, dirs)
            worst = int(np.argmin(ratio))
            history.append({"side": side, "nuBar": weights["low"], "LambdaBar": weights["high"],
                            "min_ratio": float(ratio[worst]), "t": float(ts[worst])})
            return ratio[worst] >= margin, ts[worst], ratio[worst]

        for side, ts, shrink in (("low", t_low, 0.5), ("high", t_high, 2.0)):
            value = weights[side]
            ok, t_bad, r_bad = measure(side, ts, value)
            steps = 0
            while not ok:
                if steps == max_steps:
                    raise CalibrationError(f"ellipticity not certified on the {side} side after {max_steps} steps",
                                           worst={"t": float(t_bad), "ratio": float(r_bad)})
                value *= shrink
                ok, t_bad, r_bad = measure(side, ts, value)
                steps += 1
            if steps:
                # bisect back toward the last failing weight so the margin is met tightly
                good, bad = value, value / shrink
                for _ in range(12):
                    mid = np.sqrt(good * bad)
                    if measure(side, ts, mid)[0]:
                        good = mid
                    else:
                        bad = mid
                measure(side, ts, good)
        nb, LB = weights["low"], weights["high"]
    fbar = Lagrangian(ev, grad, hess, F.dim, p, q1, None, f"Fbar[{F.name}]", autonomous=True)
    bundle = ApproximationBundle(xf, r, float(t1), float(t2), phibar.a1, phibar.a2, p, q1, nu,
                                 cert.Lambda_growth, LB, nb, {"eta1": e1, "eta2": e2, "eta3": e3}, phibar,
                                 fbar=fbar, calibration=history)
    return fbar, bundle


def eta_bound(bundle: ApproximationBundle, t=None):
    """The achieved constant in ``eta + t|eta'| + t^2|eta''| <= C`` over all three transitions."""
    t = np.logspace(np.log10(bundle.t1) - 3, np.log10(bundle.t2) + 3, 2001) if t is None else np.asarray(t, float)
    return float(max(np.max(e.combination_bound(t)) for e in bundle.etas.values()))


def verify_growth_of_approx(bundle: ApproximationBundle, directions=32, seed=0, per_case=24):
    """Certify ``phibar`` as growth function of the bundle's approximant on dense case samples.

    Returns a GrowthCertificate whose residuals carry per-case constants.
    Raises GrowthError naming the case interval if ellipticity fails.
    """
    phibar = bundle.phibar
    if bundle.abar is not None:
        model, field_eval, jac = bundle.abar, bundle.abar.eval, bundle.abar.jacobian
    elif bundle.fbar is not None:
        model, field_eval, jac = bundle.fbar, bundle.fbar.gradient, bundle.fbar.hessian
    else:
        raise ParameterError("bundle carries no approximant")
    dirs = sphere_directions(model.dim, directions, seed)
    t = _case_samples(bundle.t1, bundle.t2, per_case)
    xi = t[:, None, None] * dirs[None]
    J = jac(None, xi)
    op, lam, _ = jacobian_extremes(J)
    a = np.linalg.norm(field_eval(None, xi), axis=-1)
    d = phibar.deriv(None, t)[:, None]
    jr = (t[:, None] * op / d).max(axis=-1)
    gr = ((a + t[:, None] * op) / d).max(axis=-1)
    er = (lam * t[:, None] / d).min(axis=-1)
    cases = {}
    for name, (lo, hi) in _case_intervals(bundle.t1, bundle.t2).items():
        sel = (t > lo) & (t <= hi)
        cases[name] = {"nu": float(er[sel].min()), "Lambda": float(jr[sel].max()),
                       "Lambda_growth": float(gr[sel].max())}
        if not er[sel].min() > 0:
            k = np.flatnonzero(sel)[int(np.argmin(er[sel]))]
            raise GrowthError(f"ellipticity fails on case interval {name} at |xi| = {t[k]:.6g}",
                              sample={"case": name, "t": float(t[k])})
    if not er.min() > 0:
        k = int(np.argmin(er))
        raise GrowthError(f"ellipticity fails at |xi| = {t[k]:.6g}", sample={"case": "outside", "t": float(t[k])})
    residuals = {"cases": cases, "eta_bound": eta_bound(bundle)}
    grid = {"t_min": float(t[0]), "t_max": float(t[-1]), "t_points": int(t.size), "directions": directions,
            "seed": seed}
    return GrowthCertificate(phibar, bundle.p, bundle.q1, float(er.min()), float(jr.max()), float(gr.max()),
                             residuals, {}, {}, grid, field=bundle.abar if bundle.abar is not None else None,
                             lagrangian=bundle.fbar)


# ---------------------------------------------------------------------------
# nondegenerate regularization


def regularize(abar: VectorField, phibar: PhiFunction, eps):
    """``A_eps(xi) = A(xi + eps xi/|xi|) |xi|/(eps + |xi|)`` and ``phi_eps'(t) = phi'(eps + t) t/(eps + t)``.

    ``eps = 0`` returns the inputs unchanged; ``phibar`` may be ``None``.
    """
    eps = float(eps)
    if eps == 0.0:
        return abar, phibar
    if not 0 < eps < 0.5:
        raise ParameterError("eps must lie in (0, 1/2)")

    def ev(x, xi):
        xi = np.asarray(xi, float)
        e, t, safe = _unit(xi)
        y = (t + eps)[..., None] * e
        return (t / (t + eps))[..., None] * abar.eval(x, y)

    def jac(x, xi):
        xi = np.asarray(xi, float)
        e, t, safe = _unit(xi)
        n = xi.shape[-1]
        outer = e[..., :, None] * e[..., None, :]
        y = (t + eps)[..., None] * e
        m = t / (t + eps)
        dy = (1 + eps / safe)[..., None, None] * (np.eye(n) - outer) + outer
        grad_m = (eps / (t + eps) ** 2)[..., None] * e
        return abar.eval(x, y)[..., :, None] * grad_m[..., None, :] + m[..., None, None] * (abar.jacobian(x, y) @ dy)

    a_eps = VectorField(ev, jac, abar.dim, abar.p, abar.q, abar.L, f"{abar.name}_eps", autonomous=abar.autonomous)
    if phibar is None:
        return a_eps, None

    def dphi(x, t):
        t = np.asarray(t, float)
        return phibar.deriv(x, eps + t) * t / (eps + t)

    def phi(x, t):
        t = np.asarray(t, float)
        nodes = 0.5 * (LEG_X + 1.0)
        s = t[..., None] * nodes
        return 0.5 * t * np.sum(LEG_W * dphi(x, s), axis=-1)

    phi_eps = PhiFunction(phi, dphi, p_lo=phibar.p_lo, q_hi=phibar.q_hi, autonomous=phibar.autonomous,
                          name=f"{phibar.name}_eps")
    return a_eps, phi_eps
