"""Generalized Orlicz integrands phi(x, t) and their elementary algebra.

A :class:`PhiFunction` wraps a vectorized callable ``func(x, t)`` where ``x``
is either ``None`` (autonomous integrand) or an array of points with a
trailing coordinate axis, and ``t`` is an array of nonnegative reals that
broadcasts against the leading axes of ``x``.

The checks in this module work on finite samples: a log-spaced t-grid times
an optional list of points.  "Almost" monotonicity constants are reported as
the largest defining ratio over sampled pairs, so a pass only means that no
violation was found on the recorded grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import EvaluationError, ParameterError, RangeError, WindowError

SLACK = 1e-9
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def default_t_grid(lo=1e-6, hi=1e6, per_decade=10):
    """Log-spaced grid over ``[lo, hi]`` with ``per_decade`` points per decade."""
    decades = np.log10(hi) - np.log10(lo)
    count = int(round(decades * per_decade)) + 1
    return np.logspace(np.log10(lo), np.log10(hi), max(count, 2))


def _as_points(x):
    if x is None:
        return None
    return np.asarray(x, dtype=float)


class PhiFunction:
    """An integrand ``phi(x, t)`` with derivative access and declared bounds.

    Parameters
    ----------
    func : callable
        ``func(x, t) -> array``; must broadcast ``t`` against the leading axes
        of ``x`` (``x`` may be ``None`` for autonomous integrands).
    deriv : callable, optional
        Right derivative in ``t`` with the same signature.  When omitted a
        central difference with step ``max(1e-8, 1e-6 t)`` is used.
    p_lo, q_hi : float, optional
        Declared exponent bounds (lower and upper growth).
    L : float
        Declared constant used by the (A0)/(aInc)/(aDec) checks.
    autonomous : bool
        True when ``func`` ignores ``x``.
    """

    def __init__(
        self,
        func: Callable,
        deriv: Optional[Callable] = None,
        p_lo: Optional[float] = None,
        q_hi: Optional[float] = None,
        L: float = 1.0,
        autonomous: bool = True,
        name: str = "phi",
    ):
        if L < 1:
            raise ParameterError(f"declared constant L must be >= 1, got {L}")
        self._func = func
        self._deriv = deriv
        self.p_lo = p_lo
        self.q_hi = q_hi
        self.L = float(L)
        self.autonomous = autonomous
        self.name = name

    def eval(self, x, t):
        t = np.asarray(t, dtype=float)
        return np.asarray(self._func(None if self.autonomous else _as_points(x), t), dtype=float)

    __call__ = eval

    def deriv(self, x, t):
        t = np.asarray(t, dtype=float)
        if self._deriv is not None:
            return np.asarray(self._deriv(None if self.autonomous else _as_points(x), t), dtype=float)
        return numeric_derivative(lambda s: self.eval(x, s), t)

    @property
    def has_analytic_derivative(self):
        return self._deriv is not None

    def derivative_function(self, L=None):
        """Return ``phi'`` wrapped as a PhiFunction (exponents shifted by one)."""
        shift = lambda v: None if v is None else v - 1.0
        return PhiFunction(
            self.deriv,
            None,
            p_lo=shift(self.p_lo),
            q_hi=shift(self.q_hi),
            L=self.L if L is None else L,
            autonomous=self.autonomous,
            name=f"{self.name}'",
        )

    def __repr__(self):
        return f"PhiFunction({self.name}, p_lo={self.p_lo}, q_hi={self.q_hi}, L={self.L})"


def numeric_derivative(f, t):
    """Central difference with step ``max(1e-8, 1e-6 t)``; one-sided near 0."""
    t = np.asarray(t, dtype=float)
    h = np.maximum(1e-8, 1e-6 * t)
    lo = np.maximum(t - h, 0.0)
    hi = t + h
    return (f(hi) - f(lo)) / (hi - lo)


def power(p, scale=1.0):
    """Autonomous ``scale * t^p`` with analytic derivative."""
    return PhiFunction(
        lambda x, t: scale * t**p,
        lambda x, t: scale * p * t ** (p - 1.0),
        p_lo=p,
        q_hi=p,
        L=max(1.0, scale, 1.0 / scale),
        name=f"{scale}*t^{p}",
    )


@dataclass(frozen=True)
class SampleGrid:
    """A t-grid together with optional sample points ``x`` (shape ``(m, d)``)."""

    t: np.ndarray = field(default_factory=default_t_grid)
    x: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ParameterError("t-grid needs at least two points")
        if np.any(t <= 0) or np.any(np.diff(t) <= 0):
            raise ParameterError("t-grid must be positive and strictly increasing")
        if t[-1] / t[0] < 100.0 * (1 - 1e-12):
            raise ParameterError("t-grid must span at least two decades")
        object.__setattr__(self, "t", t)
        if self.x is not None:
            object.__setattr__(self, "x", np.atleast_2d(np.asarray(self.x, dtype=float)))

    def points(self):
        return [None] if self.x is None else list(self.x)


@dataclass(frozen=True)
class ConditionReport:
    condition: str
    gamma: Optional[float]
    passed: bool
    witnessed_constant: float
    declared_constant: float
    counterexample: Optional[tuple] = None

    @property
    def verdict(self):
        return "pass" if self.passed else "fail"


def _values(phi, grid):
    """Matrix of phi values, rows = sample points, columns = t-grid."""
    rows = []
    for x in grid.points():
        v = phi.eval(x, grid.t)
        v = np.broadcast_to(v, grid.t.shape)
        bad = ~np.isfinite(v)
        if np.any(bad):
            j = int(np.argmax(bad))
            raise EvaluationError(
                f"non-finite value of {phi.name} at x={x}, t={grid.t[j]}", x=x, t=grid.t[j]
            )
        rows.append(np.array(v, dtype=float))
    return np.vstack(rows)


def _log_ratio(values, t, gamma):
    with np.errstate(divide="ignore"):
        return np.log(values) - gamma * np.log(t)


def _spread(lf, increasing):
    """Largest log-violation of almost monotonicity in one row.

    Returns ``(log_constant, i, j)`` with ``i < j`` the witnessing indices.
    """
    if increasing:
        # f(t_i) <= L f(t_j) for i < j: compare each entry with the running max before it
        acc = np.maximum.accumulate(lf)
    else:
        acc = np.minimum.accumulate(lf)
    with np.errstate(invalid="ignore"):
        gap = acc - lf if increasing else lf - acc
    gap = np.where(np.isnan(gap), 0.0, gap)
    j = int(np.argmax(gap))
    best = float(gap[j])
    if best <= 0.0:
        return 0.0, None, None
    head = lf[: j + 1]
    i = int(np.argmax(head)) if increasing else int(np.argmin(head))
    return best, i, j


def check_condition(phi: PhiFunction, condition: str, gamma=None, grid: SampleGrid = None, L=None):
    """Check (A0), (Inc)/(Dec) or (aInc)/(aDec) of ``phi`` on a sample grid.

    ``condition`` is one of ``"A0"``, ``"Inc"``, ``"Dec"``, ``"aInc"``,
    ``"aDec"``.  For the almost versions the declared constant is ``L`` or,
    failing that, ``phi.L``; the exact versions use 1.  A counterexample is a
    triple ``(x, t, s)``; for monotonicity ``t < s`` violates the inequality
    with the declared constant.
    """
    grid = SampleGrid() if grid is None else grid
    tags = ("A0", "Inc", "Dec", "aInc", "aDec")
    if condition not in tags:
        raise ParameterError(f"unknown condition {condition!r}; expected one of {tags}")
    declared = float(phi.L if L is None else L)
    if condition in ("Inc", "Dec"):
        declared = 1.0
    points = grid.points()

    if condition == "A0":
        worst, where = 1.0, None
        for x in points:
            v = float(np.broadcast_to(phi.eval(x, np.array([1.0])), (1,))[0])
            if not np.isfinite(v):
                raise EvaluationError(f"non-finite value at x={x}, t=1", x=x, t=1.0)
            c = np.inf if v <= 0 else max(v, 1.0 / v)
            if c > worst:
                worst, where = c, x
        passed = bool(worst <= declared * (1 + SLACK))
        return ConditionReport("A0", None, passed, worst, declared, None if passed else (where, 1.0, 1.0))

    if gamma is None:
        raise ParameterError(f"{condition} needs an exponent gamma")
    increasing = condition in ("Inc", "aInc")
    values = _values(phi, grid)
    best, witness = 0.0, None
    for row, x in zip(values, points):
        lf = _log_ratio(row, grid.t, gamma)
        log_c, i, j = _spread(lf, increasing)
        if log_c > best:
            best, witness = log_c, (x, float(grid.t[i]), float(grid.t[j]))
    witnessed = float(np.exp(best))
    passed = bool(best <= np.log(declared) + SLACK)
    return ConditionReport(condition, float(gamma), passed, witnessed, declared, None if passed else witness)


def left_inverse(phi: PhiFunction, x, s, lo=0.0, hi=1e6, rtol=1e-13, max_iter=2000):
    """``inf{tau >= 0 : phi(x, tau) >= s}`` by bisection on ``[lo, hi]``."""
    s = float(s)
    if not np.isfinite(s):
        raise ParameterError("level s must be finite")
    if s <= 0.0:
        return 0.0
    top = float(phi.eval(x, np.array(hi)))
    if not top >= s:
        raise RangeError(f"level {s} exceeds {phi.name}(x, {hi}) = {top}; enlarge the search interval")
    a, b = float(lo), float(hi)
    if float(phi.eval(x, np.array(a))) >= s:
        return a
    for _ in range(max_iter):
        if b - a <= rtol * b:
            break
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        if float(phi.eval(x, np.array(mid))) >= s:
            b = mid
        else:
            a = mid
    return b


def left_inverse_many(fun, levels, lo=1e-12, hi=1e12, iters=100):
    """Vectorized left inverse of an increasing map by bisection in log t.

    ``fun`` maps an array of t values (shape of ``levels``) to values.  Returns
    ``(tau, reached)``; where ``fun(hi) < level`` the entry of ``reached`` is
    False and ``tau`` is ``hi``.
    """
    levels = np.asarray(levels, dtype=float)
    a = np.full(levels.shape, np.log(lo))
    b = np.full(levels.shape, np.log(hi))
    reached = fun(np.exp(b)) >= levels
    for _ in range(iters):
        mid = 0.5 * (a + b)
        up = fun(np.exp(mid)) >= levels
        b = np.where(up, mid, b)
        a = np.where(up, a, mid)
    tau = np.exp(b)
    tau = np.where(levels <= 0, 0.0, tau)
    return tau, reached | (levels <= 0)


def _golden_max(f, a, b, rtol=1e-14, max_iter=300):
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= rtol * max(abs(b), 1e-300):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return max(fc, fd)


def conjugate(phi: PhiFunction, x, s, window=(1e-12, 1e12), points=1201):
    """``sup_{tau >= 0} (s tau - phi(x, tau))`` by grid scan plus golden section."""
    s = float(s)
    tau = np.concatenate(([0.0], np.logspace(np.log10(window[0]), np.log10(window[1]), points)))
    with np.errstate(over="ignore", invalid="ignore"):
        vals = s * tau - phi.eval(x, tau)
    vals = np.broadcast_to(vals, tau.shape)
    if np.any(np.isnan(vals)):
        j = int(np.argmax(np.isnan(vals)))
        raise EvaluationError(f"non-finite value at t={tau[j]}", x=x, t=tau[j])
    k = int(np.argmax(vals))
    if k == tau.size - 1:
        raise WindowError(f"supremum for s={s} not localized below t={window[1]}")
    grid_best = float(vals[k])
    lo = tau[max(k - 1, 0)]
    hi = tau[k + 1]

    def objective(v):
        return s * v - float(phi.eval(x, np.array(v)))

    refined = _golden_max(objective, lo, hi)
    return max(grid_best, refined, 0.0)


def young_gap(phi: PhiFunction, x, t, s, **kw):
    """``phi(x,t) + phi*(x,s) - t s`` (nonnegative by Young's inequality)."""
    return float(phi.eval(x, np.array(float(t)))) + conjugate(phi, x, s, **kw) - float(t) * float(s)


@dataclass(frozen=True)
class ItemResult:
    passed: bool
    constants: dict


@dataclass(frozen=True)
class Prop0Report:
    items: dict

    @property
    def passed(self):
        return all(item.passed for item in self.items.values())


def check_prop0(phi: PhiFunction, grid: SampleGrid = None, tol=1e-8):
    """Check ``t phi' ~ phi`` and ``phi*(phi'(t)) <= t phi'(t)`` on a grid.

    The first item reports the range of ``t phi'(t) / phi(t)``; a convex
    integrand has the ratio at least 1 and, under (Dec)_q, at most q.  The
    second item reports the worst ratio ``phi*(phi'(t)) / (t phi'(t))``.
    """
    grid = SampleGrid(t=np.logspace(-3, 3, 61)) if grid is None else grid
    items = {}
    lo_ratio, hi_ratio, worst = np.inf, 0.0, 0.0
    for x in grid.points():
        v = phi.eval(x, grid.t)
        d = phi.deriv(x, grid.t)
        r = grid.t * d / v
        lo_ratio = min(lo_ratio, float(np.min(r)))
        hi_ratio = max(hi_ratio, float(np.max(r)))
        for t, dv in zip(grid.t, d):
            star = conjugate(phi, x, dv)
            worst = max(worst, star / (t * dv))
    upper = np.inf if phi.q_hi is None else phi.q_hi
    ok2 = bool(np.isfinite(hi_ratio) and lo_ratio >= 1 - tol and hi_ratio <= upper * (1 + tol))
    items["equivalence"] = ItemResult(ok2, {"ratio_min": lo_ratio, "ratio_max": hi_ratio})
    items["conjugate_bound"] = ItemResult(bool(worst <= 1 + tol), {"worst_ratio": worst})
    return Prop0Report(items)


@dataclass(frozen=True)
class SplitResidual:
    lhs: float
    rhs: float

    @property
    def ratio(self):
        """``lhs / rhs``; the implicit constant is the largest such ratio."""
        if self.lhs == 0.0:
            return 0.0
        return self.lhs / self.rhs


def quasiconvexity_split(phi: PhiFunction, x1, x2, kappa):
    """Both sides of the quasiconvexity splitting inequality for vectors x1, x2.

    lhs = phi(|x1 - x2|);
    rhs = kappa (phi(|x1|) + phi(|x2|)) + kappa^{-1} phi'(|x1|+|x2|)/(|x1|+|x2|) |x1 - x2|^2.
    """
    if kappa <= 0:
        raise ParameterError("kappa must be positive")
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    d = float(np.linalg.norm(x1 - x2))
    a, b = float(np.linalg.norm(x1)), float(np.linalg.norm(x2))
    if d == 0.0:
        return SplitResidual(0.0, 0.0)
    s = a + b
    lhs = float(phi.eval(None, np.array(d)))
    rhs = kappa * float(phi.eval(None, np.array(a)) + phi.eval(None, np.array(b)))
    rhs += float(phi.deriv(None, np.array(s))) / s * d * d / kappa
    return SplitResidual(lhs, rhs)


def fit_split_constant(phi: PhiFunction, pairs: Sequence, kappas: Sequence):
    """Largest ``lhs / rhs`` of :func:`quasiconvexity_split` over pairs and kappas."""
    worst = 0.0
    for x1, x2 in pairs:
        for kappa in kappas:
            worst = max(worst, quasiconvexity_split(phi, x1, x2, kappa).ratio)
    return worst
