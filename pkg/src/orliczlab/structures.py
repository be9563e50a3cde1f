"""Nonlinearities A(x, xi), Lagrangians F(x, xi) and the built-in model families.

Conventions
-----------
Points ``x`` live in the closed unit square; coefficient profiles are
extended outside it by nearest-point projection.  ``x`` has shape
``(..., 2)`` and ``xi`` has shape ``(..., n)``; leading axes broadcast.
Jacobians and Hessians carry two trailing axes ``(..., n, n)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import norm, qmc

from .errors import ParameterError

TINY = 1e-300


# ---------------------------------------------------------------------------
# coefficient profiles


def project_to_square(x):
    return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)


class Profile:
    """Scalar coefficient field on the unit square.

    ``bounds`` is the (min, max) of the field over the square and ``holder``
    an optional (exponent, seminorm) pair describing its modulus.
    """

    def __init__(self, func, bounds, holder=None, spec=None, constant=False):
        self._func = func
        self.bounds = (float(bounds[0]), float(bounds[1]))
        self.holder = holder
        self.spec = spec
        self.is_constant = constant

    def __call__(self, x):
        x = project_to_square(x)
        return np.asarray(self._func(x), dtype=float)

    def to_dict(self):
        return self.spec


def constant(value):
    v = float(value)
    return Profile(lambda x: np.full(x.shape[:-1], v), (v, v), None, {"kind": "constant", "value": v}, True)


def linear(c0, slope, axis=0):
    c0, slope, axis = float(c0), float(slope), int(axis)
    ends = (c0, c0 + slope)
    return Profile(
        lambda x: c0 + slope * x[..., axis],
        (min(ends), max(ends)),
        (1.0, abs(slope)),
        {"kind": "linear", "c0": c0, "slope": slope, "axis": axis},
        slope == 0.0,
    )


def holder_bump(base, amp, beta, center=(0.5, 0.5)):
    """``base + amp |x - center|^beta``: a field with exact modulus ``r^beta``."""
    base, amp, beta = float(base), float(amp), float(beta)
    if not 0.0 < beta <= 1.0:
        raise ParameterError(f"Hoelder exponent beta must lie in (0, 1], got {beta}")
    c = np.asarray(center, dtype=float)
    corners = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    dmax = float(np.max(np.linalg.norm(corners - c, axis=1)))
    dmin = float(np.linalg.norm(c - project_to_square(c)))
    vals = (base + amp * dmin**beta, base + amp * dmax**beta)
    return Profile(
        lambda x: base + amp * np.linalg.norm(x - c, axis=-1) ** beta,
        (min(vals), max(vals)),
        (beta, abs(amp)),
        {"kind": "holder_bump", "base": base, "amp": amp, "beta": beta, "center": [float(v) for v in c]},
        amp == 0.0,
    )


def smoothstep(lo, hi, axis=0, start=0.25, end=0.75):
    """Cubic smoothstep from ``lo`` to ``hi`` along one axis over ``[start, end]``."""
    lo, hi, axis = float(lo), float(hi), int(axis)
    start, end = float(start), float(end)
    if end <= start:
        raise ParameterError("smoothstep needs start < end")

    def f(x):
        s = np.clip((x[..., axis] - start) / (end - start), 0.0, 1.0)
        return lo + (hi - lo) * s * s * (3.0 - 2.0 * s)

    lip = 1.5 * abs(hi - lo) / (end - start)
    return Profile(
        f,
        (min(lo, hi), max(lo, hi)),
        (1.0, lip),
        {"kind": "smoothstep", "lo": lo, "hi": hi, "axis": axis, "start": start, "end": end},
        lo == hi,
    )


PROFILE_KINDS = {
    "constant": constant,
    "linear": linear,
    "holder_bump": holder_bump,
    "smoothstep": smoothstep,
}


def make_profile(spec):
    """Build a profile from a number, a callable, a Profile or a spec dict."""
    if isinstance(spec, Profile):
        return spec
    if isinstance(spec, (int, float)):
        return constant(spec)
    if callable(spec):
        grid = np.stack(np.meshgrid(np.linspace(0, 1, 101), np.linspace(0, 1, 101), indexing="ij"), -1)
        vals = np.asarray(spec(grid), dtype=float)
        return Profile(spec, (float(vals.min()), float(vals.max())), None, {"kind": "callable"})
    if isinstance(spec, dict):
        spec = dict(spec)
        kind = spec.pop("kind", None)
        if kind not in PROFILE_KINDS:
            raise ParameterError(f"unknown profile kind {kind!r}; expected one of {sorted(PROFILE_KINDS)}")
        try:
            return PROFILE_KINDS[kind](**spec)
        except TypeError as exc:
            raise ParameterError(f"bad parameters for profile {kind!r}: {exc}") from None
    raise ParameterError(f"cannot build a profile from {spec!r}")


# ---------------------------------------------------------------------------
# field and Lagrangian types


def _norm(xi):
    return np.linalg.norm(xi, axis=-1)


def _unit(xi):
    t = _norm(xi)
    safe = np.where(t > 0, t, 1.0)
    return xi / safe[..., None], t


class VectorField:
    """A nonlinearity A(x, xi) with Jacobian D_xi A.

    ``potential`` is set when ``A = D_xi F`` for a known Lagrangian ``F``.
    """

    def __init__(self, eval, jacobian, dim=2, p=None, q=None, L=None, name="A",
                 potential=None, autonomous=False):
        self._eval = eval
        self._jac = jacobian
        self.dim = int(dim)
        self.p, self.q, self.L = p, q, L
        self.name = name
        self.potential = potential
        self.autonomous = autonomous

    def eval(self, x, xi):
        return self._eval(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))

    __call__ = eval

    def jacobian(self, x, xi):
        return self._jac(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))

    def scaled(self, c):
        c = float(c)
        return VectorField(lambda x, xi: c * self.eval(x, xi), lambda x, xi: c * self.jacobian(x, xi),
                           self.dim, self.p, self.q, self.L, f"{c}*{self.name}", None, self.autonomous)

    def __repr__(self):
        return f"VectorField({self.name}, n={self.dim}, p={self.p}, q={self.q})"


class Lagrangian:
    """A scalar integrand F(x, xi) with gradient and Hessian in xi."""

    def __init__(self, eval, gradient, hessian, dim=2, p=None, q=None, L=None, name="F",
                 autonomous=False, meta=None):
        self._eval = eval
        self._grad = gradient
        self._hess = hessian
        self.dim = int(dim)
        self.p, self.q, self.L = p, q, L
        self.name = name
        self.autonomous = autonomous
        self.meta = {} if meta is None else meta

    def eval(self, x, xi):
        return self._eval(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))

    __call__ = eval

    def gradient(self, x, xi):
        return self._grad(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))

    def hessian(self, x, xi):
        return self._hess(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))

    @property
    def field(self):
        return VectorField(self._grad, self._hess, self.dim, self.p, self.q, self.L,
                           f"D{self.name}", potential=self, autonomous=self.autonomous)

    def __repr__(self):
        return f"Lagrangian({self.name}, n={self.dim}, p={self.p}, q={self.q})"


def radial_lagrangian(g, g1, g2, dim=2, **kw):
    """Lagrangian ``F(x, xi) = g(x, |xi|)`` from the radial profile and its t-derivatives."""

    def ev(x, xi):
        return g(x, _norm(xi))

    def grad(x, xi):
        e, t = _unit(xi)
        return g1(x, t)[..., None] * e

    def hess(x, xi):
        e, t = _unit(xi)
        d1 = g1(x, t)
        d2 = g2(x, t)
        safe = np.where(t > 0, t, 1.0)
        tang = np.where(t > 0, d1 / safe, d2)
        outer = e[..., :, None] * e[..., None, :]
        eye = np.eye(xi.shape[-1])
        return d2[..., None, None] * outer + tang[..., None, None] * (eye - outer)

    return Lagrangian(ev, grad, hess, dim=dim, **kw)


def freeze(F: Lagrangian, x0):
    """The autonomous Lagrangian ``xi -> F(x0, xi)``."""
    x0 = np.asarray(x0, dtype=float)

    def at(fn):
        return lambda x, xi: fn(np.broadcast_to(x0, np.shape(xi)[:-1] + x0.shape), xi)

    return Lagrangian(at(F.eval), at(F.gradient), at(F.hessian), F.dim, F.p, F.q, F.L,
                      f"{F.name}@{x0.tolist()}", autonomous=True)


def a_minus_one(A: VectorField):
    """The field ``(x, xi) -> |xi| A(x, xi)``."""

    def G(x, xi):
        xi = np.asarray(xi, dtype=float)
        return _norm(xi)[..., None] * A.eval(x, xi)

    return G


# ---------------------------------------------------------------------------
# model families


@dataclass(frozen=True)
class ModelSpec:
    family: str
    params: dict = field(default_factory=dict)


def _pl_constants(p):
    return max(p - 1.0, 1.0 / (p - 1.0))


def _build_p_laplace(p=2.0, n=2):
    p = float(p)
    if not p > 1:
        raise ParameterError(f"p_laplace: exponent must satisfy p > 1, got p={p}")
    F = radial_lagrangian(
        lambda x, t: t**p / p,
        lambda x, t: t ** (p - 1.0),
        lambda x, t: (p - 1.0) * t ** (p - 2.0),
        dim=n, p=p, q=p, L=_pl_constants(p), name=f"p_laplace(p={p})", autonomous=True,
        meta={"growth": lambda x, t: t**p / p},
    )
    return F


def _build_variable_exponent(p=None, n=2):
    prof = make_profile(2.0 if p is None else p)
    lo, hi = prof.bounds
    if not lo > 1:
        raise ParameterError(f"variable_exponent: need 1 < p- <= p+, got p- = {lo}")

    def pe(x, t):
        return prof(x) * np.ones_like(t)

    def g(x, t):
        q = pe(x, t)
        return t**q / q

    def g1(x, t):
        return t ** (pe(x, t) - 1.0)

    def g2(x, t):
        q = pe(x, t)
        return (q - 1.0) * t ** (q - 2.0)

    F = radial_lagrangian(g, g1, g2, dim=n, p=lo, q=hi, L=max(_pl_constants(lo), _pl_constants(hi)),
                          name="variable_exponent", autonomous=prof.is_constant,
                          meta={"exponent": prof, "growth": g})
    return F


def _check_pq(family, p, q):
    if not 1 < p <= q:
        raise ParameterError(f"{family}: need 1 < p <= q, got p={p}, q={q}")


def _check_nonneg(family, name, prof):
    if prof.bounds[0] < 0:
        raise ParameterError(f"{family}: coefficient {name} must be >= 0, got min {prof.bounds[0]}")


def _build_double_phase(p=2.0, q=3.0, a=None, n=2):
    p, q = float(p), float(q)
    _check_pq("double_phase", p, q)
    ap = make_profile(1.0 if a is None else a)
    _check_nonneg("double_phase", "a", ap)

    def coef(x, t):
        return ap(x) * np.ones_like(t)

    def g(x, t):
        return t**p + coef(x, t) * t**q

    def g1(x, t):
        return p * t ** (p - 1) + q * coef(x, t) * t ** (q - 1)

    def g2(x, t):
        return p * (p - 1) * t ** (p - 2) + q * (q - 1) * coef(x, t) * t ** (q - 2)

    return radial_lagrangian(g, g1, g2, dim=n, p=p, q=q, L=max(q - 1.0, 1.0 / (p - 1.0)),
                             name="double_phase", autonomous=ap.is_constant,
                             meta={"coefficient": ap, "growth": g})


def _build_orlicz_double_phase(p=2.0, q=3.0, a=None, n=2):
    """``t^p log(e + t) + a(x) t^q`` evaluated at ``t = |xi|``."""
    p, q = float(p), float(q)
    _check_pq("orlicz_double_phase", p, q)
    ap = make_profile(1.0 if a is None else a)
    _check_nonneg("orlicz_double_phase", "a", ap)
    e = math.e

    def coef(x, t):
        return ap(x) * np.ones_like(t)

    def g(x, t):
        return t**p * np.log(e + t) + coef(x, t) * t**q

    def g1(x, t):
        return p * t ** (p - 1) * np.log(e + t) + t**p / (e + t) + q * coef(x, t) * t ** (q - 1)

    def g2(x, t):
        log = np.log(e + t)
        first = p * (p - 1) * t ** (p - 2) * log + 2 * p * t ** (p - 1) / (e + t) - t**p / (e + t) ** 2
        return first + q * (q - 1) * coef(x, t) * t ** (q - 2)

    qq = max(q, p + 1.0)
    return radial_lagrangian(g, g1, g2, dim=n, p=p, q=qq, L=max(qq - 1.0, 1.0 / (p - 1.0)),
                             name="orlicz_double_phase", autonomous=ap.is_constant,
                             meta={"coefficient": ap, "growth": g})


def _build_aniso_quartic(p=2.0, q=3.0, a=None, gamma=None, blend=0.5, literal=False, n=2):
    """``gamma(x) H(x, M(xi))`` with ``H(x, s) = s^p + a(x) s^q``.

    ``M(xi) = Q(xi)^{1/4}`` where ``Q(xi) = blend |xi|^4 + (1 - blend) sum xi_i^4``.
    ``blend = 0`` is the pure quartic norm, whose level sets are flat at the
    coordinate axes, so the Hessian degenerates there; a positive blend keeps
    the model uniformly elliptic.  ``literal=True`` uses ``M = Q`` instead of
    its fourth root.
    """
    p, q, blend = float(p), float(q), float(blend)
    _check_pq("aniso_quartic", p, q)
    if not 0.0 <= blend <= 1.0:
        raise ParameterError(f"aniso_quartic: blend must lie in [0, 1], got {blend}")
    ap = make_profile(0.0 if a is None else a)
    gp = make_profile(1.0 if gamma is None else gamma)
    _check_nonneg("aniso_quartic", "a", ap)
    if not gp.bounds[0] > 0:
        raise ParameterError(f"aniso_quartic: weight gamma must satisfy gamma- > 0, got {gp.bounds[0]}")

    def quartic(xi):
        r2 = np.sum(xi * xi, axis=-1)
        Q = blend * r2 * r2 + (1 - blend) * np.sum(xi**4, axis=-1)
        dQ = 4 * blend * r2[..., None] * xi + 4 * (1 - blend) * xi**3
        eye = np.eye(xi.shape[-1])
        d2Q = 4 * blend * (r2[..., None, None] * eye + 2 * xi[..., :, None] * xi[..., None, :])
        d2Q = d2Q + 12 * (1 - blend) * (xi**2)[..., None] * eye
        return Q, dQ, d2Q

    def measure(xi):
        Q, dQ, d2Q = quartic(xi)
        if literal:
            return Q, dQ, d2Q
        safe = np.where(Q > 0, Q, 1.0)
        M = Q**0.25
        dM = 0.25 * safe[..., None] ** -0.75 * dQ
        d2M = 0.25 * safe[..., None, None] ** -0.75 * d2Q
        d2M = d2M - (3.0 / 16.0) * safe[..., None, None] ** -1.75 * dQ[..., :, None] * dQ[..., None, :]
        zero = (Q <= 0)[..., None]
        dM = np.where(zero, 0.0, dM)
        d2M = np.where(zero[..., None], 0.0, d2M)
        return M, dM, d2M

    def h(x, s, k):
        c = ap(x) * np.ones_like(s)
        if k == 0:
            return s**p + c * s**q
        if k == 1:
            return p * s ** (p - 1) + q * c * s ** (q - 1)
        return p * (p - 1) * s ** (p - 2) + q * (q - 1) * c * s ** (q - 2)

    def ev(x, xi):
        M, _, _ = measure(xi)
        return gp(x) * h(x, M, 0)

    def grad(x, xi):
        M, dM, _ = measure(xi)
        return (gp(x) * h(x, M, 1))[..., None] * dM

    def hess(x, xi):
        M, dM, d2M = measure(xi)
        safe = np.where(M > 0, M, 1.0)
        w = gp(x) * np.ones_like(M)
        h1 = h(x, safe, 1)
        h2 = h(x, safe, 2)
        out = (w * h2)[..., None, None] * dM[..., :, None] * dM[..., None, :] + (w * h1)[..., None, None] * d2M
        return out

    scale = 4.0 if literal else 1.0
    pp, qq = scale * p, scale * q
    return Lagrangian(ev, grad, hess, dim=n, p=pp, q=qq, L=None, name="aniso_quartic",
                      autonomous=ap.is_constant and gp.is_constant,
                      meta={"coefficient": ap, "weight": gp, "blend": blend, "literal": literal})


REGISTRY = {
    "p_laplace": (_build_p_laplace, {"p": "real > 1", "n": "int >= 2"}),
    "variable_exponent": (_build_variable_exponent, {"p": "profile with 1 < p- <= p+", "n": "int >= 2"}),
    "double_phase": (_build_double_phase, {"p": "real > 1", "q": "real >= p", "a": "profile >= 0", "n": "int >= 2"}),
    "orlicz_double_phase": (
        _build_orlicz_double_phase,
        {"p": "real > 1", "q": "real >= p", "a": "profile >= 0", "n": "int >= 2"},
    ),
    "aniso_quartic": (
        _build_aniso_quartic,
        {"p": "real > 1", "q": "real >= p", "a": "profile >= 0", "gamma": "profile > 0",
         "blend": "real in [0, 1]", "literal": "bool", "n": "int >= 2"},
    ),
}


def build_model(spec: ModelSpec) -> Lagrangian:
    """Build the Lagrangian of a registered family; ``.field`` gives ``A = D_xi F``."""
    if spec.family not in REGISTRY:
        raise ParameterError(f"unknown model family {spec.family!r}; registered: {sorted(REGISTRY)}")
    builder, schema = REGISTRY[spec.family]
    unknown = set(spec.params) - set(schema)
    if unknown:
        raise ParameterError(f"{spec.family}: unknown parameters {sorted(unknown)}")
    n = int(spec.params.get("n", 2))
    if n < 2:
        raise ParameterError(f"{spec.family}: dimension n must be >= 2, got {n}")
    model = builder(**spec.params)
    model.meta["spec"] = spec
    return model


# ---------------------------------------------------------------------------
# sampling and quasi-isotropy


def sphere_directions(n, m, seed=None):
    """``m`` low-discrepancy unit vectors in R^n; prefixes are nested in ``m``.

    In the plane the angles follow the base-2 van der Corput sequence, rotated
    by a seed-dependent offset.  In higher dimension a scrambled Sobol
    sequence is pushed to the sphere through the Gaussian quantile map.
    """
    if n == 2:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            u = qmc.Sobol(d=1, scramble=False).random(m)[:, 0]
        offset = 0.0 if seed is None else np.random.default_rng(seed).random()
        ang = 2 * np.pi * ((u + offset) % 1.0)
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        u = qmc.Sobol(d=n, scramble=True, seed=0 if seed is None else seed).random(m)
    z = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


def square_points(k):
    """``k x k`` lattice of cell centers in the unit square."""
    c = (np.arange(k) + 0.5) / k
    return np.stack(np.meshgrid(c, c, indexing="ij"), -1).reshape(-1, 2)


@dataclass(frozen=True)
class IsotropyReport:
    L: float
    eigen_ratio: float
    worst: tuple
    ellipticity_failure: Optional[tuple]
    per_radius: dict

    @property
    def passed(self):
        return self.ellipticity_failure is None and np.isfinite(self.L)


def operator_norm(J):
    """Largest singular value per matrix; closed form for 2x2 blocks."""
    J = np.asarray(J, float)
    if J.shape[-2:] != (2, 2):
        return np.linalg.norm(J, ord=2, axis=(-2, -1))
    fro2 = np.sum(J**2, axis=(-2, -1))
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    disc = np.sqrt(np.maximum(fro2**2 - 4 * det**2, 0.0))
    return np.sqrt(0.5 * (fro2 + disc))


def jacobian_extremes(J):
    """Operator norm and extreme eigenvalues of the symmetric part, per matrix."""
    J = np.asarray(J, float)
    op = operator_norm(J)
    sym = 0.5 * (J + np.swapaxes(J, -1, -2))
    if J.shape[-2:] == (2, 2):
        mid = 0.5 * (sym[..., 0, 0] + sym[..., 1, 1])
        rad = np.hypot(0.5 * (sym[..., 0, 0] - sym[..., 1, 1]), sym[..., 0, 1])
        return op, mid - rad, mid + rad
    eig = np.linalg.eigvalsh(sym)
    return op, eig[..., 0], eig[..., -1]


def check_quasi_isotropy(A: VectorField, x_points=None, radii=None, n_dirs=64, seed=None):
    """Smallest L with ``|D A(x, xi')| <= L D A(x, xi) e.e`` over sampled spheres.

    For each sampled ``x`` and radius ``t`` the numerator is the largest
    operator norm over the sampled sphere and the denominator the smallest
    quadratic form.  ``eigen_ratio`` is the ratio of extreme eigenvalues of
    the symmetric part (the Hessian eigenvalue form for Lagrangians).
    """
    x_points = np.array([[0.5, 0.5]]) if x_points is None else np.atleast_2d(np.asarray(x_points, float))
    radii = np.logspace(-3, 3, 13) if radii is None else np.asarray(radii, dtype=float)
    dirs = sphere_directions(A.dim, n_dirs, seed)
    best, eig_best, worst, failure = 0.0, 0.0, None, None
    per_radius = {}
    for t in radii:
        xi = t * dirs
        r_best = 0.0
        for x in x_points:
            J = A.jacobian(np.broadcast_to(x, (len(dirs), x.size)), xi)
            op, lo, hi = jacobian_extremes(J)
            k = int(np.argmin(lo))
            if not lo[k] > 0:
                if failure is None:
                    failure = (tuple(x), float(t), tuple(xi[k]))
                ratio = np.inf
                eratio = np.inf
            else:
                ratio = float(np.max(op) / lo[k])
                eratio = float(np.max(hi) / lo[k])
            r_best = max(r_best, ratio)
            if ratio > best:
                best, worst = ratio, (tuple(x), float(t))
            eig_best = max(eig_best, eratio)
        per_radius[float(t)] = r_best
    return IsotropyReport(best, eig_best, worst, failure, per_radius)
