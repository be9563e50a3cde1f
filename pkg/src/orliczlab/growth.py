"""Growth functions extracted from a nonlinearity and their certification.

Pipeline for a field ``A``: sample ``psi'(x, t) = sup_{|xi|=t} |xi| |D A(x, xi)|``
on a log t-grid, turn ``t psi'(t)`` into a convex profile that is
(Inc)_p and (Dec)_{q1}, and define ``phi'(x, t) = psi~(x, t) / t``.  The
certificate then records the extreme ratios of the growth sandwich over the
sample set.

Profiles are stored as samples on the t-grid and interpolated as a power
law on every segment, so the quadrature ``phi = int psi~(s)/s ds`` is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConvexificationError, GrowthError, MonotonicityError, ParameterError
from .phi_core import PhiFunction, SampleGrid, check_condition, default_t_grid
from .structures import Lagrangian, VectorField, jacobian_extremes, operator_norm, sphere_directions, square_points

DEFAULT_POINT = np.array([0.5, 0.5])


def _expm1_over(z):
    out = np.ones_like(z)
    big = np.abs(z) > 1e-12
    out[big] = np.expm1(z[big]) / z[big]
    return out


class LogLogProfile:
    """Positive samples ``v(t_i)`` interpolated as a power law per segment.

    Below the grid ``v`` is extrapolated with exponent ``below``, above it
    with exponent ``above``.
    """

    def __init__(self, t, v, below, above):
        self.t = np.asarray(t, dtype=float)
        self.v = np.asarray(v, dtype=float)
        if np.any(self.v <= 0) or not np.all(np.isfinite(self.v)):
            raise ParameterError("profile samples must be positive and finite")
        self.below = float(below)
        self.above = float(above)
        self.lt = np.log(self.t)
        self.lv = np.log(self.v)
        self.slopes = np.diff(self.lv) / np.diff(self.lt)
        # cumulative int_0^{t_i} v(s)/s ds, exact per power-law segment
        seg = self.v[:-1] * np.diff(self.lt) * _expm1_over(self.slopes * np.diff(self.lt))
        self.cum = np.concatenate(([self.v[0] / self.below], self.v[0] / self.below + np.cumsum(seg)))

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, self.t.size - 2)
        return t, k

    def value(self, t):
        t, k = self._locate(t)
        with np.errstate(divide="ignore"):
            lt = np.log(t)
        mid = self.lv[k] + self.slopes[k] * (lt - self.lt[k])
        low = self.lv[0] + self.below * (lt - self.lt[0])
        high = self.lv[-1] + self.above * (lt - self.lt[-1])
        out = np.where(t < self.t[0], low, np.where(t > self.t[-1], high, mid))
        return np.exp(out)

    def log_slope(self, t):
        t, k = self._locate(t)
        return np.where(t < self.t[0], self.below, np.where(t > self.t[-1], self.above, self.slopes[k]))

    def integral(self, t):
        """``int_0^t v(s)/s ds``."""
        t, k = self._locate(t)
        v = self.value(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            lt = np.log(t)
            dl = lt - self.lt[k]
            mid = self.cum[k] + self.v[k] * dl * _expm1_over(np.atleast_1d(self.slopes[k] * dl)).reshape(np.shape(dl))
        low = v / self.below
        dh = lt - self.lt[-1]
        high = self.cum[-1] + self.v[-1] * dh * _expm1_over(np.atleast_1d(self.above * dh)).reshape(np.shape(dh))
        out = np.where(t < self.t[0], low, np.where(t > self.t[-1], high, mid))
        return np.where(t > 0, out, 0.0)

    def inverse_square_integral(self):
        """Samples of ``int_0^{t_i} v(s)/s^2 ds`` (exact per segment)."""
        e = self.slopes - 1.0
        dl = np.diff(self.lt)
        seg = self.v[:-1] / self.t[:-1] * dl * _expm1_over(e * dl)
        first = self.v[0] / self.t[0] / (self.below - 1.0)
        return np.concatenate(([first], first + np.cumsum(seg)))


def lower_hull_indices(t, v):
    """Vertices of the greatest convex minorant of ``(0,0) ∪ {(t_i, v_i)}``.

    Returned indices refer to the input arrays; the origin is implicit.
    Slopes are compared directly, which stays well conditioned when the
    values span many orders of magnitude.
    """
    hull = []  # list of (tx, vx, index)
    pts = [(0.0, 0.0, -1)] + [(float(a), float(b), i) for i, (a, b) in enumerate(zip(t, v))]
    for pt in pts:
        while len(hull) >= 2:
            (x0, y0, _), (x1, y1, _) = hull[-2], hull[-1]
            s01 = (y1 - y0) / (x1 - x0)
            s02 = (pt[1] - y0) / (pt[0] - x0)
            if s02 <= s01:
                hull.pop()
            else:
                break
        hull.append(pt)
    return [h[2] for h in hull if h[2] >= 0]


def _hull_values(t, v):
    idx = lower_hull_indices(t, v)
    xs = np.concatenate(([0.0], t[idx]))
    ys = np.concatenate(([0.0], v[idx]))
    return np.interp(t, xs, ys)


@dataclass(frozen=True)
class ConvexifyResult:
    profile: LogLogProfile
    p: float
    q1: float
    equiv_constant: float

    def phi(self):
        prof = self.profile
        return PhiFunction(lambda x, t: prof.value(t), lambda x, t: prof.value(t) * prof.log_slope(t) / np.maximum(t, 1e-300),
                           p_lo=self.p, q_hi=self.q1, name="psi~")


def convexify(t, psi, p, q, L=1.0):
    """Convex (Inc)_p / (Dec)_{q1} replacement of sampled ``psi``.

    Steps: greatest convex minorant through the origin, then the running max
    of ``psi/t^p``; ``q1`` is the largest segment log-slope, at least ``q``.  Raises
    :class:`ConvexificationError` when ``psi`` decreases or when ``psi/t``
    fails to be almost increasing with constant ``L``.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(psi, dtype=float)
    if p < 1 or q < p:
        raise ParameterError(f"need 1 <= p <= q, got p={p}, q={q}")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise ConvexificationError("samples must be positive and finite")
    if np.any(np.diff(v) < -1e-12 * v[1:]):
        raise ConvexificationError("samples must be nondecreasing")
    lr = np.log(v / t)
    excess = float(np.max(np.maximum.accumulate(lr) - lr))
    if excess > np.log(L) + 1e-9:
        raise ConvexificationError(
            f"psi/t is not almost increasing with L={L} (witnessed {np.exp(excess):.4g}); "
            "no equivalent convex function exists"
        )
    lt = np.log(t)
    hull = _hull_values(t, v)
    # running max of psi/t^p; the corrected function stays convex (each junction
    # is a convex kink), so no further hull pass is needed
    w = np.exp(np.maximum.accumulate(np.log(hull) - p * lt) + p * lt)
    slopes = np.diff(np.log(w)) / np.diff(lt)
    q1 = float(max(q, np.max(slopes)))
    prof = LogLogProfile(t, w, below=p, above=q1)
    equiv = float(np.max(np.maximum(w / v, v / w)))
    return ConvexifyResult(prof, float(p), q1, equiv)


def is_convex_on_grid(t, v, rtol=1e-10):
    s = np.diff(v) / np.diff(t)
    return bool(np.all(np.diff(s) >= -rtol * np.abs(s[1:])))


def extract_psi_prime(A: VectorField, x, t, directions=64, seed=None):
    """``t * max_k |D A(x, t e_k)|`` over ``directions`` low-discrepancy unit vectors."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t <= 0):
        raise ParameterError("t must be positive")
    dirs = sphere_directions(A.dim, directions, seed) if np.ndim(directions) == 0 else np.asarray(directions)
    xi = t[:, None, None] * dirs[None, :, :]
    xp = np.broadcast_to(DEFAULT_POINT if x is None else np.asarray(x, float), xi.shape[:-1] + (2,))
    op = operator_norm(A.jacobian(xp, xi))
    return t * np.max(op, axis=-1)


class GrowthFunction(PhiFunction):
    """``phi(x, t) = int_0^t psi~(x, s)/s ds`` with per-point profiles built lazily."""

    def __init__(self, builder, autonomous, p_lo, q_hi, L=1.0, name="phi"):
        self._builder = builder
        self._cache = {}
        super().__init__(self._phi, self._dphi, p_lo=p_lo, q_hi=q_hi, L=L, autonomous=autonomous, name=name)

    def profile(self, x):
        key = None if x is None else tuple(np.round(np.asarray(x, float), 14))
        if key not in self._cache:
            self._cache[key] = self._builder(None if x is None else np.asarray(x, float))
        return self._cache[key]

    def _apply(self, x, t, fn):
        if x is None:
            return fn(self.profile(None), t)
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return fn(self.profile(x), t)
        shape = np.broadcast_shapes(x.shape[:-1], np.shape(t))
        xb = np.broadcast_to(x, shape + (x.shape[-1],)).reshape(-1, x.shape[-1])
        tb = np.broadcast_to(t, shape).ravel()
        uniq, inv = np.unique(xb, axis=0, return_inverse=True)
        out = np.empty(tb.shape)
        order = np.argsort(inv.ravel(), kind="stable")
        starts = np.searchsorted(inv.ravel()[order], np.arange(len(uniq) + 1))
        for k, row in enumerate(uniq):
            sel = order[starts[k]:starts[k + 1]]
            out[sel] = fn(self.profile(row), tb[sel])
        return out.reshape(shape)

    def _phi(self, x, t):
        return self._apply(x, t, lambda pr, s: pr.profile.integral(s))

    def _dphi(self, x, t):
        return self._apply(x, t, lambda pr, s: pr.profile.value(s) / np.where(s > 0, s, 1.0) * (s > 0))

    def second_deriv(self, x, t):
        """Right derivative of ``phi'``; meaningful for the C^2 upgraded profile."""
        def fn(pr, s):
            s = np.asarray(s, float)
            return pr.profile.value(s) * (pr.profile.log_slope(s) - 1.0) / s**2
        return self._apply(x, t, fn)


@dataclass
class GrowthCertificate:
    phi: GrowthFunction
    p1: float
    q1: float
    nu: float
    Lambda: float
    Lambda_growth: float
    residuals: dict
    equiv_constant: dict
    conditions: dict
    grid: dict
    field: Optional[VectorField] = None
    lagrangian: Optional[Lagrangian] = None

    def to_dict(self):
        return {
            "p1": self.p1,
            "q1": self.q1,
            "nu": self.nu,
            "Lambda": self.Lambda,
            "Lambda_growth": self.Lambda_growth,
            "residuals": self.residuals,
            "equiv_constant": self.equiv_constant,
            "conditions": {k: {"passed": r.passed, "witnessed_constant": r.witnessed_constant}
                           for k, r in self.conditions.items()},
            "grid": self.grid,
        }


def _sandwich(A, phi, x, t, dirs):
    """Per-sample ratios of the upper growth bound and the ellipticity bound."""
    xi = t[:, None, None] * dirs[None, :, :]
    xp = np.broadcast_to(DEFAULT_POINT if x is None else x, xi.shape[:-1] + (2,))
    J = A.jacobian(xp, xi)
    op, lo, _ = jacobian_extremes(J)
    a = np.linalg.norm(A.eval(xp, xi), axis=-1)
    dphi = phi.deriv(x, t)[:, None]
    jac_ratio = t[:, None] * op / dphi
    growth_ratio = (a + t[:, None] * op) / dphi
    ell_ratio = lo * t[:, None] / dphi
    return jac_ratio, growth_ratio, ell_ratio, xi


def build_growth_function(model, x_points=None, t_grid=None, directions=64, seed=None, p=None, q=None,
                          normalization="t_psi_prime", c2=False, L=1.0):
    """Construct a growth function for ``model`` and certify it on samples.

    Parameters
    ----------
    model : VectorField or Lagrangian
        For a Lagrangian the field ``D_xi F`` is used.
    x_points : array (m, 2), optional
        Sample points; defaults to the centre for autonomous models and a
        3x3 lattice otherwise.
    normalization : {"t_psi_prime", "integral"}
        Which sampled function is convexified: ``t psi'(t)`` (so that
        ``phi' ~ psi'`` with constant one for power laws) or ``int_0^t psi'``.
    c2 : bool
        Replace ``phi'`` by ``int_0^t phi'(s)/s ds`` so that ``phi''`` exists.

    ``Lambda`` bounds ``|xi| |D A| <= Lambda phi'`` and ``Lambda_growth`` the
    full ``|A| + |xi| |D A| <= Lambda_growth phi'``.
    """
    F = model if isinstance(model, Lagrangian) else getattr(model, "potential", None)
    A = model.field if isinstance(model, Lagrangian) else model
    t_grid = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    p = A.p if p is None else p
    q = A.q if q is None else q
    if p is None or q is None:
        raise ParameterError("declared exponents p, q are required")
    if normalization not in ("t_psi_prime", "integral"):
        raise ParameterError(f"unknown normalization {normalization!r}")
    dirs = sphere_directions(A.dim, directions, seed)
    autonomous = bool(A.autonomous)
    if x_points is None:
        x_points = None if autonomous else square_points(3)

    def builder(x):
        dpsi = extract_psi_prime(A, x, t_grid, dirs)
        if normalization == "t_psi_prime":
            base = t_grid * dpsi
        else:
            seg = LogLogProfile(t_grid, dpsi * t_grid, below=p, above=q)
            base = seg.cum
        res = convexify(t_grid, base, p, q, L=L)
        if c2:
            prof = res.profile
            w = t_grid * prof.inverse_square_integral()
            res = convexify(t_grid, w, p, max(q, res.q1), L=L)
        return res

    phi = GrowthFunction(builder, autonomous, p_lo=p, q_hi=None, name=f"phi[{A.name}]")
    points = [None] if (autonomous or x_points is None) else list(np.atleast_2d(x_points))
    q1 = max(phi.profile(x).q1 for x in points)
    phi.q_hi = q1

    jac_max = grow_max = 0.0
    ell_min = np.inf
    c1 = 1.0
    worst_ell = None
    for x in points:
        jr, gr, er, xi = _sandwich(A, phi, x, t_grid, dirs)
        k = np.unravel_index(int(np.argmin(er)), er.shape)
        if not er[k] > 0:
            raise GrowthError(f"nonpositive ellipticity at x={x}, xi={xi[k].tolist()}", sample=(x, xi[k]))
        if er[k] < ell_min:
            ell_min, worst_ell = float(er[k]), (None if x is None else x.tolist(), xi[k].tolist())
        jac_max = max(jac_max, float(jr.max()))
        grow_max = max(grow_max, float(gr.max()))
        c1 = max(c1, _equivalence_a(A, phi, x, t_grid, dirs))

    # held-out residuals: geometric midpoints and a finer, rotated direction set
    t_mid = np.sqrt(t_grid[:-1] * t_grid[1:])
    vdirs = sphere_directions(A.dim, 4 * directions, 1 if seed is None else seed + 1)
    slack31, slack32 = np.inf, np.inf
    for x in points:
        _, gr, er, _ = _sandwich(A, phi, x, t_mid, vdirs)
        slack31 = min(slack31, 1.0 - float(gr.max()) / grow_max)
        slack32 = min(slack32, float(er.min()) / ell_min - 1.0)

    sample = SampleGrid(t=t_grid, x=None if points == [None] else np.array(points))
    dphi = phi.derivative_function()
    conditions = {
        "A0": check_condition(dphi, "A0", grid=sample, L=max(1.0, _a0_constant(dphi, points))),
        "Inc(p1-1)": check_condition(dphi, "Inc", p - 1.0, grid=sample),
        "Dec(q1-1)": check_condition(dphi, "Dec", q1 - 1.0, grid=sample),
    }
    equiv = {"c1": c1}
    if F is not None:
        equiv["c2"] = max(_equivalence_f(F, phi, x, t_grid, dirs) for x in points)
    grid = {
        "t_min": float(t_grid[0]), "t_max": float(t_grid[-1]), "t_points": int(t_grid.size),
        "directions": int(directions), "seed": seed, "normalization": normalization, "c2": bool(c2),
        "x_points": None if points == [None] else [list(map(float, x)) for x in points],
    }
    residuals = {"slack_3_1": slack31, "slack_3_2": slack32, "worst_ellipticity_sample": worst_ell,
                 "equivalence_to_sampled": max(phi.profile(x).equiv_constant for x in points)}
    return GrowthCertificate(phi, float(p), float(q1), ell_min, jac_max, grow_max, residuals, equiv,
                             conditions, grid, field=A, lagrangian=F)


def _a0_constant(dphi, points):
    vals = [float(np.broadcast_to(dphi.eval(x, np.array([1.0])), (1,))[0]) for x in points]
    return max(max(v, 1.0 / v) for v in vals)


def _equivalence_a(A, phi, x, t, dirs):
    xi = t[:, None, None] * dirs[None, :, :]
    xp = np.broadcast_to(DEFAULT_POINT if x is None else x, xi.shape[:-1] + (2,))
    a = A.eval(xp, xi)
    ph = phi.eval(x, t)[:, None]
    upper = t[:, None] * np.linalg.norm(a, axis=-1) / ph
    lower = ph / np.sum(a * xi, axis=-1)
    return float(max(upper.max(), lower.max()))


def _equivalence_f(F, phi, x, t, dirs):
    xi = t[:, None, None] * dirs[None, :, :]
    xp = np.broadcast_to(DEFAULT_POINT if x is None else x, xi.shape[:-1] + (2,))
    f = F.eval(xp, xi)
    ph = phi.eval(x, t)[:, None]
    return float(max((f / ph).max(), (ph / f).max()))


@dataclass(frozen=True)
class EquivalenceReport:
    c1: float
    c2: Optional[float]
    worst: dict
    integral_identity_residual: Optional[float] = None


def check_equivalences(cert: GrowthCertificate, model=None, t=None, directions=32, seed=None):
    """Two-sided constants of ``phi ~ |xi||A|`` (c1) and ``phi ~ F`` (c2).

    ``c1`` is the larger of ``sup |xi||A|/phi`` and ``sup phi/(A.xi)``, so it
    covers the whole chain ``phi <~ A.xi <= |xi||A| <~ phi``.  For a Lagrangian
    the identity ``F(xi) = int_0^1 D F(s xi).xi ds`` is also checked by
    Gauss-Legendre quadrature.
    """
    model = cert.lagrangian if model is None else model
    F = model if isinstance(model, Lagrangian) else None
    A = model.field if F is not None else (model if model is not None else cert.field)
    t = np.logspace(-3, 3, 31) if t is None else np.asarray(t, dtype=float)
    dirs = sphere_directions(A.dim, directions, seed)
    points = [None] if cert.grid["x_points"] is None else [np.array(x) for x in cert.grid["x_points"]]
    c1, c2, resid = 1.0, None, None
    worst = {}
    for x in points:
        v = _equivalence_a(A, cert.phi, x, t, dirs)
        if not np.isfinite(v):
            raise GrowthError(f"unbounded ratio phi vs |xi||A| at x={x}", sample=x)
        if v >= c1:
            c1, worst["c1"] = v, None if x is None else x.tolist()
        if F is not None:
            v2 = _equivalence_f(F, cert.phi, x, t, dirs)
            if not np.isfinite(v2):
                raise GrowthError(f"unbounded ratio phi vs F at x={x}", sample=x)
            if c2 is None or v2 >= c2:
                c2, worst["c2"] = v2, None if x is None else x.tolist()
            nodes, weights = np.polynomial.legendre.leggauss(40)
            s = 0.5 * (nodes + 1.0)
            xi = t[:, None, None] * dirs[None, :, :]
            xp = np.broadcast_to(DEFAULT_POINT if x is None else x, xi.shape[:-1] + (2,))
            acc = np.zeros(xi.shape[:-1])
            for sk, wk in zip(s, weights):
                acc += 0.5 * wk * np.sum(F.gradient(xp, sk * xi) * xi, axis=-1)
            f = F.eval(xp, xi)
            r = float(np.max(np.abs(acc - f) / f))
            resid = r if resid is None else max(resid, r)
    return EquivalenceReport(c1, c2, worst, resid)


@dataclass(frozen=True)
class MonotonicityReport:
    constant: float
    worst_pair: Optional[tuple]
    pairs: int


def random_pairs(n_pairs, dim=2, seed=0, lo=1e-3, hi=1e3):
    rng = np.random.default_rng(seed)
    def draw():
        r = np.exp(rng.uniform(np.log(lo), np.log(hi), n_pairs))
        d = rng.normal(size=(n_pairs, dim))
        return r[:, None] * d / np.linalg.norm(d, axis=1, keepdims=True)
    return draw(), draw()


def check_monotonicity(A: VectorField, cert: GrowthCertificate, pairs=None, x=None, n_pairs=2000, seed=0):
    """Fit the constant of the strong monotonicity inequality over sampled pairs.

    The constant is the smallest ``lhs/rhs`` with
    ``lhs = (A(xi) - A(eta)).(xi - eta)`` and
    ``rhs = phi'(|xi|+|eta|)/(|xi|+|eta|) |xi - eta|^2``.
    """
    if pairs is None:
        pairs = random_pairs(n_pairs, A.dim, seed)
    xi, eta = (np.atleast_2d(np.asarray(a, float)) for a in pairs)
    if x is None:
        x = None if cert.grid["x_points"] is None else np.array(cert.grid["x_points"][0])
    xp = np.broadcast_to(DEFAULT_POINT if x is None else x, xi.shape[:-1] + (2,))
    d = xi - eta
    lhs = np.sum((A.eval(xp, xi) - A.eval(xp, eta)) * d, axis=-1)
    s = np.linalg.norm(xi, axis=-1) + np.linalg.norm(eta, axis=-1)
    d2 = np.sum(d * d, axis=-1)
    live = d2 > 0
    if not np.any(live):
        return MonotonicityReport(np.inf, None, 0)
    bad = live & ~(lhs > 0)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise MonotonicityError(f"nonpositive monotonicity form at pair {k}", pair=(xi[k], eta[k]))
    rhs = cert.phi.deriv(x, s[live]) / s[live] * d2[live]
    ratio = lhs[live] / rhs
    k = int(np.argmin(ratio))
    idx = np.flatnonzero(live)[k]
    return MonotonicityReport(float(ratio[k]), (xi[idx].tolist(), eta[idx].tolist()), int(live.sum()))
