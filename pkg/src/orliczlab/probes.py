"""Regularity probes on solved grid functions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ProbeError
from .solver import GridFunction, discrete_gradient


@dataclass
class RegularityProbe:
    target: str
    alpha: float
    band: tuple
    residual: float
    table: list
    flags: list = field(default_factory=list)
    dropped: Optional[float] = None
    raw_slope: float = float("nan")

    def to_dict(self):
        return {"target": self.target, "alpha": self.alpha, "band": list(self.band), "residual": self.residual,
                "table": [list(row) for row in self.table], "flags": list(self.flags), "dropped": self.dropped,
                "raw_slope": self.raw_slope}

    def csv_rows(self):
        return [(float(r), float(o)) for r, o in self.table]


def _fit(logr, logo):
    A = np.stack([logr, np.ones_like(logr)], axis=1)
    coef, *_ = np.linalg.lstsq(A, logo, rcond=None)
    res = logo - A @ coef
    return coef, res


def _check_radii(radii, h):
    radii = np.sort(np.asarray(radii, float))
    if radii.size < 4:
        raise ProbeError("need at least 4 radii")
    if radii[-1] / radii[0] < 10 * (1 - 1e-12):
        raise ProbeError("radii must span at least one decade")
    if radii[0] < 4 * h * (1 - 1e-12):
        raise ProbeError(f"radius {radii[0]:.4g} is below 4h = {4 * h:.4g}")
    return radii


def default_radii(u: GridFunction, center, count=6):
    """Geometric radii from 4h to the boundary distance, stretched to one decade if the grid allows."""
    c = np.asarray(center, float)
    lo = np.asarray(u.origin, float)
    gaps = np.concatenate([c - lo, lo + u.length - c])
    reach = float(np.min(gaps))
    corner = float(np.hypot(*np.maximum(c - lo, lo + u.length - c)))
    hi = min(max(reach, 40 * u.h), corner)
    return np.geomspace(4 * u.h, hi, count)


def holder_exponent(f: GridFunction, center=(0.5, 0.5), radii=None, target="u"):
    """Log-log fit of the oscillation over nested node balls against their radius.

    ``target="Du"`` fits the excess ``mean|Du - mean Du| / mean|Du|`` over
    cell balls instead and returns its decay exponent.  If the largest radius
    misfits by more than three times the others it is dropped and the fit
    repeated.  The exponent is clamped to ``[0, 1]``; constant data give 1
    with a ``zero_oscillation`` flag.
    """
    if target not in ("u", "Du"):
        raise ProbeError("target must be 'u' or 'Du'")
    radii = _check_radii(default_radii(f, center) if radii is None else radii, f.h)
    c = np.asarray(center, float)
    if target == "u":
        pts = f.nodes()
        vals = f.values
    else:
        pts = f.cell_centers()
        vals = discrete_gradient(f)
    dist = np.linalg.norm(pts - c, axis=-1)
    scale = float(np.max(np.abs(vals))) if vals.size else 0.0
    osc = []
    for rho in radii:
        sel = dist <= rho * (1 + 1e-12)
        if target == "u":
            v = vals[sel]
            osc.append(float(v.max() - v.min()))
        else:
            g = vals[sel]
            mean_norm = float(np.mean(np.linalg.norm(g, axis=-1)))
            exc = float(np.mean(np.linalg.norm(g - g.mean(axis=0), axis=-1)))
            osc.append(exc / mean_norm if mean_norm > 0 else 0.0)
    osc = np.array(osc)
    table = list(zip(radii.tolist(), osc.tolist()))
    flags = []
    tiny = 1e-13 * max(scale, 1.0)
    if np.all(osc <= tiny):
        return RegularityProbe(target, 1.0, (1.0, 1.0), 0.0, table, ["zero_oscillation"], raw_slope=float("nan"))
    keep = osc > tiny
    if not np.all(keep):
        flags.append("zero_oscillation_at_small_radii")
    logr, logo = np.log(radii[keep]), np.log(osc[keep])
    if logr.size < 3:
        raise ProbeError("fewer than 3 radii with positive oscillation")
    coef, res = _fit(logr, logo)
    dropped = None
    others = np.abs(res[:-1])
    if logr.size > 3 and abs(res[-1]) > 3 * max(float(others.max()), 1e-15):
        dropped = float(np.exp(logr[-1]))
        logr, logo = logr[:-1], logo[:-1]
        coef, res = _fit(logr, logo)
        flags.append("dropped_largest_radius")
    slope = float(coef[0])
    dof = max(logr.size - 2, 1)
    s2 = float(res @ res) / dof
    se = np.sqrt(s2 / float(np.sum((logr - logr.mean()) ** 2)))
    alpha = min(max(slope, 0.0), 1.0)
    if alpha != slope:
        flags.append("out_of_range")
    rms = float(np.sqrt(np.mean(res**2)))
    return RegularityProbe(target, alpha, (slope - 2 * se, slope + 2 * se), rms, table, flags, dropped, slope)


# ---------------------------------------------------------------------------
# higher integrability


def _ball_cells(u: GridFunction, ball):
    """Cell masks for ``B_r`` and ``B_2r``.

    ``ball=None`` uses the inscribed-square convention of the comparison
    pipeline: ``B_2r`` is the whole grid and ``B_r`` its central half.
    Otherwise ``ball=(center, r)`` selects cells by centre distance.
    """
    N = u.N
    if ball is None:
        inner = np.zeros((N, N), dtype=bool)
        inner[N // 4:N // 4 + N // 2, N // 4:N // 4 + N // 2] = True
        return inner, np.ones((N, N), dtype=bool), None
    center, r = ball
    c = np.asarray(center, float)
    lo = np.asarray(u.origin, float)
    if np.any(c - 2 * r < lo - 1e-12) or np.any(c + 2 * r > lo + u.length + 1e-12):
        raise ProbeError("B_2r must lie inside the grid")
    d = np.linalg.norm(u.cell_centers() - c, axis=-1)
    return d <= r, d <= 2 * r, float(np.pi * (2 * r) ** 2)


def _phi_cells(phi, u, t):
    x = None if phi.autonomous else u.cell_centers()
    return np.asarray(phi.eval(x, t), float)


def _phi_minus(phi, u, mask, t):
    """``min over cells in mask of phi(x, t)``."""
    if phi.autonomous:
        return float(phi.eval(None, np.asarray(t, float)))
    xs = u.cell_centers()[mask]
    return float(np.min(phi.eval(xs, np.full(len(xs), float(t)))))


def luxemburg_norm(phi, u: GridFunction, mask, iters=30):
    """``inf{lam > 0 : sum_mask phi(x, |Du|/lam) h^2 <= 1}`` by log-bisection.

    The bracket comes from the modular ``m`` at ``lam = 1`` and the exponent
    bounds of ``phi``: the norm lies between ``m^(1/p)`` and ``m^(1/q)``.
    """
    t = np.linalg.norm(discrete_gradient(u), axis=-1)[mask]
    xs = None if phi.autonomous else u.cell_centers()[mask]
    mod = lambda lam: float(np.sum(phi.eval(xs, t / lam)) * u.h**2)
    if not np.any(t > 0):
        return 0.0
    m = mod(1.0)
    if m == 1.0:
        return 1.0
    p = max(phi.p_lo or 1.0, 1.0)
    q = max(phi.q_hi or p, p)
    ends = sorted([m ** (1 / p), m ** (1 / q)])
    lo, hi = ends[0] * 0.999, ends[1] * 1.001
    while mod(lo) <= 1 and lo > 1e-300:
        lo *= 0.5
    while mod(hi) > 1:
        hi *= 2
        if hi > 1e300:
            return float("inf")
    for _ in range(iters):
        mid = np.sqrt(lo * hi)
        if mod(mid) > 1:
            lo = mid
        else:
            hi = mid
    return hi


@dataclass
class IntegrabilityReport:
    sigma_measured: float
    ratio: float
    sigma_grid: list
    lhs: list
    rhs: float
    cap: float
    norm_B2r: float
    modular_B2r: float
    measure_B2r: Optional[float]
    caps_ok: bool

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


DEFAULT_SIGMA_GRID = tuple(np.round(np.linspace(0.05, 1.0, 20), 10))


def higher_integrability(phi, u: GridFunction, ball=None, sigma_grid=DEFAULT_SIGMA_GRID, cap=10.0,
                         check_caps=True):
    """Largest grid ``sigma`` with ``(mean_Br phi(x,|Du|)^(1+s))^(1/(1+s)) <= cap (phi^-_B2r(mean_B2r |Du|) + 1)``.

    Returns 0 when even the smallest ``sigma`` exceeds the cap.  The left side
    is checked to be nondecreasing in ``sigma`` on every call.  With
    ``check_caps`` the hypotheses ``|B_2r| <= 1`` and Luxemburg norm of
    ``|Du|`` on ``B_2r`` at most 1 are enforced.
    """
    inner, outer, measure = _ball_cells(u, ball)
    if measure is None:
        measure = float(u.length**2)
    t = np.linalg.norm(discrete_gradient(u), axis=-1)
    vals = _phi_cells(phi, u, t)
    norm = luxemburg_norm(phi, u, outer)
    modular = float(np.sum(vals[outer]) * u.h**2)
    caps_ok = bool(measure <= 1 + 1e-12 and norm <= 1 + 1e-12)
    if check_caps and not caps_ok:
        raise ProbeError(f"higher-integrability hypotheses violated: |B_2r| = {measure:.4g}, "
                         f"Luxemburg norm of Du on B_2r = {norm:.4g} (both must be <= 1)")
    sig = np.sort(np.asarray(sigma_grid, float))
    if np.any(sig < 0):
        raise ProbeError("sigma_grid must be nonnegative")
    vin = vals[inner]
    lhs = np.array([float(np.mean(vin ** (1 + s))) ** (1 / (1 + s)) for s in sig])
    if np.any(np.diff(lhs) < -1e-12 * np.maximum(lhs[1:], 1e-300)):
        raise ProbeError("power means decreased in sigma")
    rhs = _phi_minus(phi, u, outer, float(np.mean(t[outer]))) + 1.0
    ratios = lhs / rhs
    ok = np.flatnonzero(ratios <= cap)
    if ok.size == 0:
        s_meas, ratio = 0.0, float(np.mean(vin)) / rhs
    else:
        k = int(ok[-1])
        s_meas, ratio = float(sig[k]), float(ratios[k])
    return IntegrabilityReport(s_meas, ratio, sig.tolist(), lhs.tolist(), float(rhs), float(cap), float(norm),
                               modular, measure, caps_ok)


# ---------------------------------------------------------------------------
# energy inequalities for the comparison pair


@dataclass
class Lemma61Report:
    sigma: float
    item1: dict
    item2: dict
    item3: dict

    @property
    def constants(self):
        return {"item1_higher": self.item1["c_higher"], "item1_approx": self.item1["c_approx"],
                "item2": self.item2["c"], "item3": self.item3["c"]}

    @property
    def passed(self):
        return all(np.isfinite(v) for v in self.constants.values()) and self.item1["holder_exact"] \
            and self.item2["holder_exact"]

    def to_dict(self):
        return {"sigma": self.sigma, "item1": self.item1, "item2": self.item2, "item3": self.item3,
                "constants": self.constants, "passed": bool(self.passed)}


def _inner_mask(u: GridFunction, ubar: GridFunction):
    if not np.isclose(u.h, ubar.h, rtol=1e-9):
        raise ProbeError("u and ubar must share the mesh size")
    si = int(round((ubar.origin[0] - u.origin[0]) / u.h))
    sj = int(round((ubar.origin[1] - u.origin[1]) / u.h))
    n = ubar.N
    if si < 0 or sj < 0 or si + n > u.N or sj + n > u.N:
        raise ProbeError("ubar's square must lie inside u's")
    m = np.zeros((u.N, u.N), dtype=bool)
    m[si:si + n, sj:sj + n] = True
    return m


def lemma61_suite(phi, phibar, u: GridFunction, ubar: GridFunction, sigma=0.05):
    """Both sides of the three energy inequalities on ``B_r`` (ubar's square) and ``B_2r`` (u's square).

    The Hölder steps in items 1 and 2 are checked with constant exactly 1
    and raise if they fail; the remaining constants are reported as ratios.
    """
    inner = _inner_mask(u, ubar)
    t = np.linalg.norm(discrete_gradient(u), axis=-1)
    tb = np.linalg.norm(discrete_gradient(ubar), axis=-1).ravel()
    vals = _phi_cells(phi, u, t)
    vin = vals[inner]
    mean_big = float(np.mean(t))

    m1 = float(np.mean(vin))
    h1 = float(np.mean(vin ** (1 + sigma))) ** (1 / (1 + sigma))
    if m1 > h1 * (1 + 1e-12):
        raise ProbeError(f"Hölder step failed: {m1} > {h1}")
    r_minus = _phi_minus(phi, u, np.ones_like(inner), mean_big) + 1.0
    r_bar = float(phibar.eval(None, mean_big)) + 1.0 if phibar is not None else float("nan")
    item1 = {"mean_phi_Du": m1, "higher_mean": h1, "phi_minus_rhs": r_minus, "phibar_rhs": r_bar,
             "c_higher": h1 / r_minus, "c_approx": r_minus / r_bar, "holder_exact": bool(m1 <= h1 * (1 + 1e-12))}

    xb = None if phi.autonomous else ubar.cell_centers().reshape(-1, 2)
    vb = np.asarray(phi.eval(xb, tb), float)
    s2 = sigma / 2
    m2 = float(np.mean(vb))
    h2 = float(np.mean(vb ** (1 + s2))) ** (2 / (2 + sigma))
    if m2 > h2 * (1 + 1e-12):
        raise ProbeError(f"Hölder step failed: {m2} > {h2}")
    r2 = (float(np.mean(vin ** (1 + s2))) + 1.0) ** (2 / (2 + sigma))
    item2 = {"mean_phi_Dubar": m2, "higher_mean": h2, "rhs": r2, "c": h2 / r2,
             "holder_exact": bool(m2 <= h2 * (1 + 1e-12))}

    l3 = float(np.mean(tb))
    item3 = {"mean_Dubar": l3, "rhs": mean_big + 1.0, "c": l3 / (mean_big + 1.0)}
    return Lemma61Report(float(sigma), item1, item2, item3)
