"""Sampled continuity conditions in x for growth functions, fields and Lagrangians.

A continuity check sweeps balls ``B_r`` of the unit square, pairs of points
``x, y`` in the ball and gradients ``xi`` whose size keeps ``|G(y, xi)|``
below the ceiling ``K |B_r|^(-1+eps)``.  It records the tightest modulus
``omega(r)`` making

    |G(x, xi) - G(y, xi)| <= Lbar * omega(r) * (|G(y, xi)| + 1)

hold on the sample.  Verdicts only ever say "no violation found on the
recorded sample".
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ParameterError
from .phi_core import PhiFunction, left_inverse_many
from .structures import Lagrangian, VectorField, a_minus_one, sphere_directions

CONDITIONS = ("A1", "VA1", "wVA1")
TOL = 1e-9


@dataclass(frozen=True)
class ContinuitySample:
    """Where a continuity check looks: radii, ball centres, points per ball, gradients."""

    radii: tuple = tuple(np.logspace(-4, np.log10(0.5), 9))
    centers: tuple = tuple((a, b) for a in (0.25, 0.5, 0.75) for b in (0.25, 0.5, 0.75))
    ring: int = 8
    directions: int = 8
    magnitudes: int = 24
    t_floor: float = 1e-3
    epsilons: tuple = (0.1, 0.25, 0.5)
    seed: Optional[int] = 0

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        if r.size < 2 or np.any(r <= 0) or np.any(r > 1):
            raise ParameterError("sample radii must be at least two values in (0, 1]")

    def ball_points(self, center, r):
        """Centre, a ring at radius r and a ring at r/2, restricted to the square."""
        c = np.asarray(center, dtype=float)
        pts = [c]
        for rad, count in ((r, self.ring), (0.5 * r, max(self.ring // 2, 1))):
            ang = 2 * np.pi * (np.arange(count) + 0.5) / count
            pts.extend(c + rad * np.stack([np.cos(ang), np.sin(ang)], axis=-1))
        pts = np.array(pts)
        inside = np.all((pts >= -1e-12) & (pts <= 1 + 1e-12), axis=-1)
        return pts[inside]

    def to_dict(self):
        return {"radii": [float(r) for r in self.radii], "centers": [list(map(float, c)) for c in self.centers],
                "ring": self.ring, "directions": self.directions, "magnitudes": self.magnitudes,
                "t_floor": self.t_floor, "epsilons": list(self.epsilons), "seed": self.seed}


def ball_measure(r):
    return np.pi * np.asarray(r, dtype=float) ** 2


def as_field_map(G, dim=2):
    """Normalize G to ``(x, xi) -> array (..., m)`` and return ``(map, dim)``."""
    if isinstance(G, PhiFunction):
        return (lambda x, xi: G.eval(x, np.linalg.norm(xi, axis=-1))[..., None]), dim
    if isinstance(G, Lagrangian):
        return (lambda x, xi: np.asarray(G.eval(x, xi))[..., None]), G.dim
    if isinstance(G, VectorField):
        return G.eval, G.dim
    if not callable(G):
        raise ParameterError("G must be callable")

    def wrapped(x, xi):
        v = np.asarray(G(x, xi), dtype=float)
        return v if v.ndim == np.ndim(xi) else v[..., None]

    return wrapped, dim


@dataclass
class ContinuityReport:
    condition: str
    K: float
    Lbar: float
    epsilon: float
    radii: np.ndarray
    omega_tight: np.ndarray
    omega_fit: np.ndarray
    beta: Optional[float]
    violations: list
    violation_counts: np.ndarray
    r_split: float
    sample: ContinuitySample
    warnings: list = field(default_factory=list)
    per_epsilon: dict = field(default_factory=dict)
    limit_bounded: Optional[bool] = None

    @property
    def passed(self):
        ok = not self.violations
        if self.limit_bounded is not None:
            ok = ok and self.limit_bounded
        return ok and all(rep.passed for rep in self.per_epsilon.values())

    @property
    def verdict(self):
        return "no violation found on sample" if self.passed else "violated on sample"

    def table(self):
        """Rows ``(r, omega_tight, omega_fit, Lbar, violations)`` for CSV output."""
        return [(float(r), float(w), float(f), float(self.Lbar), int(v))
                for r, w, f, v in zip(self.radii, self.omega_tight, self.omega_fit, self.violation_counts)]

    def to_dict(self):
        out = {
            "condition": self.condition, "K": self.K, "Lbar": self.Lbar, "epsilon": self.epsilon,
            "passed": self.passed, "verdict": self.verdict, "beta": self.beta, "r_split": self.r_split,
            "table": [dict(zip(("r", "omega_tight", "omega", "Lbar", "violations"), row)) for row in self.table()],
            "violations": [_jsonable(v) for v in self.violations[:50]],
            "warnings": list(self.warnings), "sample": self.sample.to_dict(),
        }
        if self.per_epsilon:
            out["per_epsilon"] = {str(k): v.to_dict() for k, v in self.per_epsilon.items()}
            out["limit_bounded"] = self.limit_bounded
        return out


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def concave_majorant(r, w):
    """Least concave majorant of ``(r_i, w_i)`` through the origin, evaluated at ``r``.

    The result is nondecreasing: it is capped by its running maximum, which
    keeps concavity because a concave function stays concave after clipping at
    its maximum.
    """
    r = np.asarray(r, dtype=float)
    w = np.maximum(np.asarray(w, dtype=float), 0.0)
    xs = np.concatenate([[0.0], r])
    ys = np.concatenate([[0.0], w])
    hull = [0]
    for i in range(1, xs.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (xs[b] - xs[a]) * (ys[i] - ys[a]) - (ys[b] - ys[a]) * (xs[i] - xs[a])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    out = np.interp(xs, xs[hull], ys[hull])[1:]
    return np.maximum.accumulate(np.maximum(out, w))


def power_fit(r, w):
    """Least-squares slope of ``log w`` against ``log r`` over positive entries."""
    r = np.asarray(r, dtype=float)
    w = np.asarray(w, dtype=float)
    keep = (w > 0) & np.isfinite(w)
    if keep.sum() < 2:
        return None
    return float(np.polyfit(np.log(r[keep]), np.log(w[keep]), 1)[0])


class _Sweep:
    """Raw per-radius suprema of the continuity ratio for several ceilings."""

    def __init__(self, G, K, eps_list, sample, dim=2, keep=50):
        self.map, self.dim = as_field_map(G, dim)
        self.K = float(K)
        self.eps = list(eps_list)
        self.sample = sample
        self.keep = keep
        self.dirs = sphere_directions(self.dim, sample.directions, sample.seed)
        self.warnings = []
        radii = np.asarray(sample.radii, dtype=float)
        self.radii = radii
        self.raw = {e: np.zeros(radii.size) for e in self.eps}
        self.top = {e: [[] for _ in radii] for e in self.eps}
        for i, r in enumerate(radii):
            for c in sample.centers:
                self._ball(i, r, c)

    def _levels(self, r):
        meas = ball_measure(r)
        return {e: self.K * meas ** (-1.0 + e) for e in self.eps}

    def _ball(self, i, r, center):
        X = self.sample.ball_points(center, r)
        if len(X) < 2:
            return
        levels = self._levels(r)
        ny, nd = len(X), len(self.dirs)

        def size_along(t):
            xi = t[..., None] * self.dirs[None, :, :]
            xp = np.broadcast_to(X[:, None, :], xi.shape[:-1] + (2,))
            return np.linalg.norm(self.map(xp, xi), axis=-1)

        ceil = {}
        for e, lev in levels.items():
            tau, reached = left_inverse_many(size_along, np.full((ny, nd), lev))
            if not np.all(reached):
                self.warnings.append(f"xi-grid does not reach |G| = {lev:.3g} at r = {r:.3g}, eps = {e}")
            ceil[e] = tau
        tmax = ceil[max(levels, key=levels.get)]
        mags = [np.geomspace(np.minimum(self.sample.t_floor, tmax / 10.0), tmax, self.sample.magnitudes, axis=-1)]
        mags += [ceil[e][..., None] for e in self.eps]
        mags = np.concatenate(mags, axis=-1)  # (ny, nd, m)
        xi = (mags[..., None] * self.dirs[None, :, None, :]).reshape(-1, self.dim)
        vals = self.map(np.broadcast_to(X[:, None, :], (ny, len(xi), 2)),
                        np.broadcast_to(xi[None], (ny, len(xi), self.dim)))  # (ny, nxi, m)
        size = np.linalg.norm(vals, axis=-1)
        diff = np.linalg.norm(vals[:, None] - vals[None, :], axis=-1)  # (x, y, xi)
        ratio = diff / (size[None, :, :] + 1.0)
        for e, lev in levels.items():
            adm = size <= lev * (1 + 1e-12)  # (y, xi)
            rr = np.where(adm[None], ratio, -1.0)
            flat = rr.ravel()
            if flat.size == 0:
                continue
            best = float(flat.max())
            if best > self.raw[e][i]:
                self.raw[e][i] = best
            k = min(self.keep, flat.size)
            idx = np.argpartition(-flat, k - 1)[:k]
            for j in idx:
                if flat[j] <= 0:
                    continue
                ix, iy, ik = np.unravel_index(j, rr.shape)
                self.top[e][i].append((float(flat[j]), float(r), X[ix].copy(), X[iy].copy(), xi[ik].copy()))


def _envelope(radii, r_split, beta_floor, condition):
    ratio = radii / r_split
    if condition == "A1":
        return np.maximum(1.0, ratio ** (-beta_floor))
    return np.minimum(1.0, ratio ** beta_floor)


def _report(sweep, eps, condition, Lbar, r_split, beta_floor):
    """Report for one ceiling.  ``Lbar`` is the shared normalization from eps = 0.

    (A1) thresholds use ``Lbar`` with a mildly growing envelope.  (VA1)/(wVA1)
    thresholds use the largest ratio of this ceiling over the upper radii, with
    a decaying envelope, so a modulus that grows as r shrinks is caught even
    when it stays below the eps = 0 level.
    """
    radii = sweep.radii
    env = _envelope(radii, r_split, beta_floor, condition)
    raw = sweep.raw[eps]
    scale = Lbar if condition == "A1" else float(raw[radii >= r_split].max())
    violations, counts = [], np.zeros(radii.size, dtype=int)
    for i in np.flatnonzero(radii < r_split):
        thr = scale * env[i] * (1 + TOL) + 1e-15
        for val, r, x, y, xi in sorted(sweep.top[eps][i], key=lambda z: -z[0]):
            if val > thr:
                counts[i] += 1
                violations.append({"r": r, "x": x.tolist(), "y": y.tolist(), "xi": xi.tolist(),
                                   "ratio": val, "bound": thr})
    if Lbar > 0:
        tight = raw / Lbar
    else:
        tight = np.where(raw > 0, np.inf, 0.0)
    if condition == "A1":
        fit = np.ones_like(tight)
    else:
        fit = concave_majorant(radii, np.where(np.isfinite(tight), tight, 0.0))
    small = radii < r_split
    beta = power_fit(radii[small], tight[small]) if condition != "A1" else None
    return ContinuityReport(condition, sweep.K, float(Lbar), float(eps), radii, tight, fit, beta,
                            violations, counts, float(r_split), sweep.sample, list(sweep.warnings))


def _shared(sweep):
    r_split = float(np.median(sweep.radii))
    return float(sweep.raw[0.0][sweep.radii >= r_split].max()), r_split


def check_continuity(G, condition, K=1.0, epsilon=None, sample=None, beta_floor=0.01, dim=2):
    """Sampled (A1), (VA1) or (wVA1) check for ``G``.

    ``G`` is a callable ``(x, xi) -> array``, a VectorField, a Lagrangian or a
    PhiFunction (then ``G(x, xi) = phi(x, |xi|)``).  Ceilings:
    ``K |B_r|^-1`` for (A1) and (VA1), ``K |B_r|^(-1+eps)`` for (wVA1).

    ``omega_tight`` is the per-radius supremum of the continuity ratio divided
    by ``Lbar``, the supremum over the upper half of the radii at the full
    ceiling.  Below the median radius ``r_split`` a sample violates (A1) when
    its ratio exceeds ``Lbar (r/r_split)^-beta_floor`` and violates (VA1)/(wVA1)
    when it exceeds the ceiling's own upper-half supremum times
    ``(r/r_split)^beta_floor``.  (VA1) also fails when (wVA1) fails for any
    ``sample.epsilons`` value, since those samples are admissible for (VA1) too.
    Passing ``epsilon`` as a sequence checks (wVA1) for every value and, in
    addition, boundedness at ``eps = 0``.
    """
    if condition not in CONDITIONS:
        raise ParameterError(f"unknown condition {condition!r}; expected one of {CONDITIONS}")
    if K <= 0:
        raise ParameterError("K must be positive")
    sample = ContinuitySample() if sample is None else sample
    multi = condition == "wVA1" and isinstance(epsilon, (list, tuple, np.ndarray))
    if condition == "wVA1":
        if epsilon is None:
            raise ParameterError("wVA1 needs epsilon in (0, 1]")
        eps_list = [float(e) for e in np.atleast_1d(epsilon)]
    elif condition == "VA1":
        eps_list = [float(e) for e in sample.epsilons]
    else:
        eps_list = []
    if any(not 0 < e <= 1 for e in eps_list):
        raise ParameterError("epsilon must lie in (0, 1]")
    sweep = _Sweep(G, K, [0.0] + eps_list, sample, dim=dim)
    for w in sweep.warnings:
        warnings.warn(w, RuntimeWarning, stacklevel=2)
    Lbar, r_split = _shared(sweep)
    if condition == "A1":
        return _report(sweep, 0.0, "A1", Lbar, r_split, beta_floor)
    subs = {e: _report(sweep, e, "wVA1", Lbar, r_split, beta_floor) for e in eps_list}
    if condition == "VA1":
        rep = _report(sweep, 0.0, "VA1", Lbar, r_split, beta_floor)
        rep.per_epsilon = subs
        return rep
    if not multi:
        return subs[eps_list[0]]
    limit = _report(sweep, 0.0, "A1", Lbar, r_split, beta_floor)
    head = subs[min(eps_list)]
    return ContinuityReport("wVA1", float(K), Lbar, min(eps_list), sweep.radii, head.omega_tight, head.omega_fit,
                            head.beta, head.violations, head.violation_counts, r_split, sample,
                            list(sweep.warnings), per_epsilon=subs, limit_bounded=not limit.violations)


def continuity_chain(G, K=1.0, epsilons=None, sample=None, beta_floor=0.01, dim=2):
    """(VA1), (wVA1) for every eps, and (A1) from one shared sweep."""
    sample = ContinuitySample() if sample is None else sample
    epsilons = sample.epsilons if epsilons is None else tuple(float(e) for e in epsilons)
    sweep = _Sweep(G, K, [0.0] + list(epsilons), sample, dim=dim)
    Lbar, r_split = _shared(sweep)
    subs = {e: _report(sweep, e, "wVA1", Lbar, r_split, beta_floor) for e in epsilons}
    va1 = _report(sweep, 0.0, "VA1", Lbar, r_split, beta_floor)
    va1.per_epsilon = dict(subs)
    a1 = _report(sweep, 0.0, "A1", Lbar, r_split, beta_floor)
    head = subs[min(epsilons)]
    wva1 = ContinuityReport("wVA1", float(K), Lbar, min(epsilons), sweep.radii, head.omega_tight,
                            head.omega_fit, head.beta, head.violations, head.violation_counts, r_split,
                            sample, list(sweep.warnings), per_epsilon=subs, limit_bounded=not a1.violations)
    return {"VA1": va1, "wVA1": wva1, "A1": a1}


# ---------------------------------------------------------------------------
# reference moduli for the worked examples


def variable_exponent_modulus(r, beta, amplitude=1.0):
    """``amplitude * r^beta * ln(1/r)``: the wVA1 modulus predicted for a Hölder exponent."""
    r = np.asarray(r, dtype=float)
    return amplitude * r**beta * np.log(1.0 / r)


def double_phase_modulus(r, eps, p, q, beta, n=2, amplitude=1.0):
    """``omega_a(2r) + r^(eps (q-p) n / p)`` for a coefficient with Hölder modulus ``amplitude r^beta``."""
    r = np.asarray(r, dtype=float)
    return amplitude * (2 * r) ** beta + r ** (eps * (q - p) * n / p)


def double_phase_regime(p, q, beta, n=2):
    """True when ``q/p <= 1 + beta/n``."""
    return q / p <= 1.0 + beta / n + 1e-12


# ---------------------------------------------------------------------------
# consequences of (wVA1) for the growth function, the field and the Lagrangian


@dataclass
class PropReport:
    constants: dict
    per_radius: list
    stable: bool
    witnesses: list
    passed: bool
    notes: list = field(default_factory=list)

    def to_dict(self):
        return _jsonable({"constants": self.constants, "per_radius": self.per_radius, "stable": self.stable,
                          "witnesses": self.witnesses[:20], "passed": self.passed, "notes": self.notes})


def _ball_extremes(fn, X, t):
    """min and max over ball points of ``fn(x, t)`` for each t."""
    vals = np.stack([np.broadcast_to(fn(x, t), t.shape) for x in X])
    return vals.min(axis=0), vals.max(axis=0)


def _stability(per_r, key, radii, factor):
    """Constants at small radii must not exceed ``factor`` times those at large radii."""
    vals = np.array([row[key] for row in per_r], dtype=float)
    split = float(np.median(radii))
    big = vals[radii >= split]
    ref = float(big.max()) if big.size else 0.0
    bad = [row for row, v, r in zip(per_r, vals, radii) if r < split and v > factor * max(ref, 1e-300)]
    if ref == 0.0:
        bad = [row for row, v, r in zip(per_r, vals, radii) if r < split and v > 1e-12]
    return not bad, bad


def _t_grid_for_ball(phi_minus, r, eps, extra_levels=()):
    lev = ball_measure(r) ** (-1.0 + eps)
    tau_top, _ = left_inverse_many(phi_minus, np.array([lev]))
    t = np.geomspace(1e-4, float(tau_top[0]), 48)
    extra = [float(left_inverse_many(phi_minus, np.array([v]))[0][0]) for v in extra_levels if v > 0]
    return np.unique(np.concatenate([t, extra])), lev


def verify_prop_AphiVA(A: VectorField, cert, epsilon, omega: Callable, sample=None, factor=4.0):
    """Fit ``c`` in the two consequences of (wVA1) for a field and its growth function.

    Item 1: ``|A(x,xi) - A(y,xi)| <= c omega(r)^(1/p') ((phi')^-_B(|xi|) + 1)`` when
    ``phi^-_B(|xi|) <= |B_r|^(-1+eps)``.  Item 2: ``phi^+_B(t) <= c phi^-_B(t)``
    when ``phi^-_B(t)`` lies in ``[omega(r), |B_r|^-1]``.  The constants are
    reported per radius; ``stable`` means they do not blow up as r shrinks.
    """
    sample = ContinuitySample() if sample is None else sample
    phi = cert.phi
    p = cert.p1
    pprime = p / (p - 1.0)
    dirs = sphere_directions(A.dim, sample.directions, sample.seed)
    per_r, witnesses = [], []
    radii = np.asarray(sample.radii, float)
    for r in radii:
        w = float(omega(r))
        c1 = c2 = 0.0
        for center in sample.centers:
            X = sample.ball_points(center, r)
            phi_minus = lambda t, X=X: _ball_extremes(phi.eval, X, np.asarray(t, float))[0]
            t, lev = _t_grid_for_ball(phi_minus, r, epsilon, extra_levels=(w,))
            pmin, pmax = _ball_extremes(phi.eval, X, t)
            dmin, _ = _ball_extremes(phi.deriv, X, t)
            xi = t[:, None, None] * dirs[None]
            vals = np.stack([A.eval(np.broadcast_to(x, xi.shape[:-1] + (2,)), xi) for x in X])
            spread = np.linalg.norm(vals[:, None] - vals[None, :], axis=-1).max(axis=(0, 1)).max(axis=-1)
            adm = pmin <= lev * (1 + 1e-12)
            rhs = w ** (1.0 / pprime) * (dmin + 1.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                r1 = np.where(spread > 0, spread / rhs, 0.0)
            r1 = np.where(adm, r1, 0.0)
            if r1.max() > c1:
                c1 = float(r1.max())
            rng = (pmin >= w * (1 - 1e-9)) & (pmin <= ball_measure(r) ** -1.0 * (1 + 1e-12))
            if np.any(rng):
                r2 = np.where(rng, pmax / pmin, 0.0)
                k = int(np.argmax(r2))
                if r2[k] > c2:
                    c2 = float(r2[k])
                    witnesses.append({"r": float(r), "center": list(center), "t": float(t[k]), "item2": c2})
        per_r.append({"r": float(r), "omega": w, "c_item1": c1, "c_item2": c2})
    ok1, bad1 = _stability(per_r, "c_item1", radii, factor)
    ok2, bad2 = _stability(per_r, "c_item2", radii, factor)
    consts = {"c_item1": max(row["c_item1"] for row in per_r), "c_item2": max(row["c_item2"] for row in per_r)}
    finite = all(np.isfinite(v) for v in consts.values())
    return PropReport(consts, per_r, ok1 and ok2, bad1 + bad2, finite and ok1 and ok2)


def verify_prop_fphiVA(F: Lagrangian, cert, epsilon, omega: Callable, sample=None, factor=4.0):
    """Fit ``c`` in ``F^+_B(xi) - F^-_B(xi) <= c omega(r) (phi^-_B(|xi|) + 1)``."""
    sample = ContinuitySample() if sample is None else sample
    phi = cert.phi
    dirs = sphere_directions(F.dim, sample.directions, sample.seed)
    radii = np.asarray(sample.radii, float)
    per_r = []
    for r in radii:
        w = float(omega(r))
        c = 0.0
        where = None
        for center in sample.centers:
            X = sample.ball_points(center, r)
            phi_minus = lambda t, X=X: _ball_extremes(phi.eval, X, np.asarray(t, float))[0]
            t, lev = _t_grid_for_ball(phi_minus, r, epsilon)
            pmin, _ = _ball_extremes(phi.eval, X, t)
            xi = t[:, None, None] * dirs[None]
            vals = np.stack([F.eval(np.broadcast_to(x, xi.shape[:-1] + (2,)), xi) for x in X])
            osc = (vals.max(axis=0) - vals.min(axis=0)).max(axis=-1)
            adm = pmin <= lev * (1 + 1e-12)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(osc > 0, osc / (w * (pmin + 1.0)), 0.0)
            ratio = np.where(adm, ratio, 0.0)
            k = int(np.argmax(ratio))
            if ratio[k] > c:
                c = float(ratio[k])
                where = {"center": list(center), "t": float(t[k])}
        per_r.append({"r": float(r), "omega": w, "c": c, "argmax": where})
    ok, bad = _stability(per_r, "c", radii, factor)
    consts = {"c": max(row["c"] for row in per_r)}
    return PropReport(consts, per_r, ok, bad, bool(np.isfinite(consts["c"]) and ok))


def _gauss_legendre(n=40):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def radial_identity_residual(F: Lagrangian, x, y, xi, order=40):
    """``|F(x,xi) - F(y,xi) - int_0^|xi| (A(x,te) - A(y,te)).e dt|`` relative to ``|F(x,xi)| + |F(y,xi)|``."""
    xi = np.asarray(xi, float)
    s, w = _gauss_legendre(order)
    pts = s[:, None] * xi[None, :]
    A = F.field
    xb = np.broadcast_to(np.asarray(x, float), (order, 2))
    yb = np.broadcast_to(np.asarray(y, float), (order, 2))
    integral = float(np.sum(w * np.sum((A.eval(xb, pts) - A.eval(yb, pts)) * xi, axis=-1)))
    direct = float(F.eval(np.asarray(x, float), xi) - F.eval(np.asarray(y, float), xi))
    return abs(direct - integral) / (abs(float(F.eval(np.asarray(x, float), xi))) +
                                      abs(float(F.eval(np.asarray(y, float), xi))) + 1e-300)


def oscillating_probe(amplitude=0.25, frequency=8.0, beta=0.5):
    """A converse probe: ``F = t^2/2 (1 + amplitude b(x) sin(frequency log(1+t)))`` with Hölder ``b``.

    The oscillation makes ``|xi| D F`` vary faster in x than F itself, relative
    to their sizes, so it is a candidate for "F passes, field fails".
    """
    from .structures import holder_bump, radial_lagrangian

    b = holder_bump(0.0, 1.0, beta)
    k = amplitude

    def g(x, t):
        return 0.5 * t**2 * (1 + k * b(x) * np.sin(frequency * np.log1p(t)))

    def g1(x, t):
        s = np.sin(frequency * np.log1p(t))
        c = np.cos(frequency * np.log1p(t))
        return t * (1 + k * b(x) * s) + 0.5 * t**2 * k * b(x) * c * frequency / (1 + t)

    def g2(x, t):
        h = 1e-6 * np.maximum(t, 1.0)
        return (g1(x, t + h) - g1(x, np.maximum(t - h, 0))) / (t + h - np.maximum(t - h, 0))

    return radial_lagrangian(g, g1, g2, dim=2, p=2.0, q=2.0 + 2 * k * frequency, L=1.0,
                             name="oscillating_probe")


@dataclass
class HphfReport:
    field_report: ContinuityReport
    lagrangian_report: ContinuityReport
    implication_holds: bool
    ratio_constant: float
    identity_residual: float
    converse: list

    @property
    def passed(self):
        return self.implication_holds

    def to_dict(self):
        return _jsonable({"field": self.field_report.to_dict(), "lagrangian": self.lagrangian_report.to_dict(),
                          "implication_holds": self.implication_holds, "ratio_constant": self.ratio_constant,
                          "identity_residual": self.identity_residual, "converse": self.converse})


def verify_prop_hphf(F: Lagrangian, sample=None, epsilon=0.25, K=1.0, probes: Sequence = (), seed=0):
    """If ``|xi| D F`` passes (wVA1), F should pass with a comparable modulus.

    ``ratio_constant`` is the largest ratio of the F-modulus to the field
    modulus over radii where the latter is positive.  ``probes`` are extra
    Lagrangians tested for the converse direction; each records whether F
    passed while its field failed.
    """
    sample = ContinuitySample() if sample is None else sample
    field_rep = check_continuity(a_minus_one(F.field), "wVA1", K=K, epsilon=epsilon, sample=sample, dim=F.dim)
    lag_rep = check_continuity(F, "wVA1", K=K, epsilon=epsilon, sample=sample, dim=F.dim)
    implication = (not field_rep.passed) or lag_rep.passed
    raw_a = field_rep.omega_tight * field_rep.Lbar
    raw_f = lag_rep.omega_tight * lag_rep.Lbar
    pos = raw_a > 0
    ratio = float(np.max(raw_f[pos] / raw_a[pos])) if np.any(pos) else (0.0 if not np.any(raw_f > 0) else np.inf)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(16):
        x, y = rng.uniform(0.05, 0.95, size=(2, 2))
        xi = rng.normal(size=F.dim) * 10 ** rng.uniform(-2, 2)
        worst = max(worst, radial_identity_residual(F, x, y, xi))

    converse = []
    for probe in probes:
        fr = check_continuity(a_minus_one(probe.field), "wVA1", K=K, epsilon=epsilon, sample=sample, dim=probe.dim)
        lr = check_continuity(probe, "wVA1", K=K, epsilon=epsilon, sample=sample, dim=probe.dim)
        converse.append({"name": probe.name, "lagrangian_passed": lr.passed, "field_passed": fr.passed,
                         "converse_failure": lr.passed and not fr.passed})
    return HphfReport(field_rep, lag_rep, implication, ratio, worst, converse)


@dataclass
class OldNewReport:
    L_old: float
    L_new: float
    L_old_sqrt: float
    implication_old_to_new: bool
    implication_new_to_old: bool
    boundary_factor: float
    per_radius: list

    @property
    def passed(self):
        return self.implication_old_to_new and self.implication_new_to_old

    def to_dict(self):
        return _jsonable(self.__dict__ | {"passed": self.passed})


def equivalence_old_new_VA1(phi: PhiFunction, omega: Callable, sample=None, t=None):
    """Compare the multiplicative and the ``+1`` forms of (VA1) for ``phi``.

    ``L_old(w)``: sup of ``|phi(x,t) - phi(y,t)| / (w phi(y,t))`` over
    ``phi(y,t)`` in ``[w, |B|^-1]``; ``L_new(w)``: sup of the same difference
    over ``w (phi(y,t) + 1)`` with ``phi(y,t) <= |B|^-1``.  The sample includes,
    for every y, the exact levels ``phi(y,t) = w`` and ``phi(y,t) = sqrt(w)``,
    so both implications ``L_new <= L_old + 2`` and ``L_old(sqrt w) <= 2 L_new``
    are decidable on it.  ``boundary_factor`` is the largest value of
    ``w (phi + 1) / (2 sqrt(w) phi)`` at the ``sqrt(w)`` level (at most 1).
    """
    sample = ContinuitySample() if sample is None else sample
    base = np.geomspace(1e-4, 1e4, 61) if t is None else np.asarray(t, float)
    L_old = L_new = L_sqrt = 0.0
    boundary = 0.0
    per_r = []
    for r in np.asarray(sample.radii, float):
        w = float(omega(r))
        top = 1.0 / ball_measure(r)
        lo_, ln_, ls_ = 0.0, 0.0, 0.0
        for center in sample.centers:
            X = sample.ball_points(center, r)
            levels = [v for v in (w, np.sqrt(w), top) if v > 0]
            ts = [base]
            for y in X:
                for lev in levels:
                    tau, ok = left_inverse_many(lambda s, y=y: np.asarray(phi.eval(y, s), float),
                                                np.array([lev]))
                    if ok[0]:
                        ts.append(tau)
            t_all = np.unique(np.concatenate(ts))
            vals = np.stack([np.broadcast_to(phi.eval(x, t_all), t_all.shape) for x in X])  # (pts, t)
            diff = np.abs(vals[:, None, :] - vals[None, :, :])  # (x, y, t)
            py = vals[None, :, :]
            within = py <= top * (1 + 1e-12)
            if w > 0:
                new = np.where(within, diff / (w * (py + 1.0)), 0.0)
                old_rng = within & (py >= w * (1 - 1e-12))
                old = np.where(old_rng, diff / (w * np.maximum(py, 1e-300)), 0.0)
                sq = np.sqrt(w)
                sq_rng = within & (py >= sq * (1 - 1e-12))
                sqr = np.where(sq_rng, diff / (sq * np.maximum(py, 1e-300)), 0.0)
                at_sqrt = np.isclose(vals, sq, rtol=1e-9)
                if np.any(at_sqrt):
                    pv = vals[at_sqrt]
                    boundary = max(boundary, float(np.max(w * (pv + 1) / (2 * sq * pv))))
            else:
                new = old = sqr = np.where(diff > 0, np.inf, 0.0)
            lo_, ln_, ls_ = max(lo_, float(old.max())), max(ln_, float(new.max())), max(ls_, float(sqr.max()))
        per_r.append({"r": float(r), "omega": w, "L_old": lo_, "L_new": ln_, "L_old_sqrt": ls_})
        L_old, L_new, L_sqrt = max(L_old, lo_), max(L_new, ln_), max(L_sqrt, ls_)
    imp1 = L_new <= (L_old + 2.0) * (1 + 1e-9) + 1e-12
    imp2 = L_sqrt <= 2.0 * L_new * (1 + 1e-9) + 1e-12
    return OldNewReport(L_old, L_new, L_sqrt, bool(imp1), bool(imp2), boundary, per_r)
