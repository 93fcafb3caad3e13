"""Exponential rise fits, chi-square scans over C_perp, and field calibration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .dissipator import RateModel
from .evolution import build_liouvillian, dnp_sequence, populations, steady_state
from .hamiltonian import (MAX_CALIBRATION_FIELD, FieldConfig, SystemParams,
                          _ground_roots)

COMPONENTS = ("plus1", "zero")


class FitError(RuntimeError):
    pass


class GridBoundaryError(RuntimeError):
    """The chi-square minimum sits on the edge of the scanned interval."""


class CalibrationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# exponential fit


@dataclass(frozen=True)
class ExpFit:
    """``p(t) = p0 - a * exp(-t / tau)``."""

    p0: float
    a: float
    tau: float
    covariance: np.ndarray
    residual_norm: float
    iterations: int

    def __call__(self, t):
        return self.p0 - self.a * np.exp(-np.asarray(t, dtype=float) / self.tau)


def _exp_model(params, t):
    p0, a, tau = params
    e = np.exp(-t / tau)
    value = p0 - a * e
    jac = np.empty((t.size, 3))
    jac[:, 0] = 1.0
    jac[:, 1] = -e
    jac[:, 2] = -a * e * t / tau ** 2
    return value, jac


def _initial_guess(t, y):
    p0 = y[-1]
    a = p0 - y[0]
    half = y[0] + 0.5 * (p0 - y[0])
    crossed = np.nonzero((y - half) * np.sign(a) >= 0)[0]
    if crossed.size and crossed[0] > 0:
        k = crossed[0]
        y0, y1 = y[k - 1], y[k]
        frac = 0.5 if y1 == y0 else (half - y0) / (y1 - y0)
        t_half = t[k - 1] + frac * (t[k] - t[k - 1])
    else:
        t_half = 0.5 * (t[-1] - t[0])
    tau = max(t_half - t[0], 1e-3 * (t[-1] - t[0])) / math.log(2.0)
    return np.array([p0, a, tau])


def fit_exponential(times, values, sigma=None, max_iter: int = 200,
                    xtol: float = 1e-10) -> ExpFit:
    """Weighted Levenberg-Marquardt fit of a single exponential approach.

    The start point is the last value for ``p0``, the total change for ``a``
    and the half-change time for ``tau``.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size != y.size:
        raise ValueError("times and values differ in length")
    if t.size < 4:
        raise ValueError("need at least 4 points")
    if np.ptp(y) == 0:
        raise FitError("data are constant")
    if sigma is None:
        w = np.ones_like(y)
    else:
        s = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
        if np.any(s <= 0):
            raise ValueError("sigma must be positive")
        w = 1.0 / s
    params = _initial_guess(t, y)
    value, jac = _exp_model(params, t)
    r = (y - value) * w
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        jw = jac * w[:, None]
        jtj = jw.T @ jw
        g = jw.T @ r
        if np.max(np.abs(g)) <= 1e-15 * max(cost, 1e-300) ** 0.5:
            converged = True
            break
        while True:
            lhs = jtj + lam * np.diag(np.diag(jtj) + 1e-30)
            try:
                step = np.linalg.solve(lhs, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = params + step
            if trial[2] > 0:
                tv, tj = _exp_model(trial, t)
                tr = (y - tv) * w
                tcost = float(tr @ tr)
                if np.isfinite(tcost) and tcost <= cost:
                    break
            lam *= 10.0
            if lam > 1e16:
                break
        if lam > 1e16:
            # no downhill step left: at a minimum up to round-off
            converged = True
            break
        rel = np.max(np.abs(step) / (np.abs(params) + 1e-12))
        params, value, jac, r = trial, tv, tj, tr
        prev, cost = cost, tcost
        lam = max(lam / 10.0, 1e-12)
        if rel < xtol or prev - cost <= 1e-15 * prev:
            converged = True
            break
    if not converged:
        raise FitError(f"no convergence after {max_iter} iterations")
    jw = jac * w[:, None]
    try:
        cov = np.linalg.inv(jw.T @ jw)
    except np.linalg.LinAlgError:
        cov = np.full((3, 3), np.nan)
    if sigma is None and t.size > 3:
        cov = cov * cost / (t.size - 3)
    if not (params[2] > 0 and math.isfinite(cost)):
        raise FitError("fit left the physical domain")
    return ExpFit(float(params[0]), float(params[1]), float(params[2]), cov,
                  math.sqrt(cost), it)


# ---------------------------------------------------------------------------
# C_perp scans


@dataclass(frozen=True)
class ExperimentTrace:
    field: FieldConfig
    times: np.ndarray
    p_plus1: np.ndarray
    p_zero: np.ndarray
    sigma: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("times must be a nonempty 1-d sequence")
        bad = np.nonzero(np.diff(t) <= 0)[0]
        if bad.size:
            raise ValueError(f"times not strictly increasing at point {bad[0] + 1}")
        arrays = {"p_plus1": self.p_plus1, "p_zero": self.p_zero}
        for key, a in arrays.items():
            a = np.asarray(a, dtype=float)
            if a.shape != t.shape:
                raise ValueError(f"{key} length differs from times")
            if np.any(a < 0) or np.any(a > 1):
                raise ValueError(f"{key} outside [0, 1]")
            object.__setattr__(self, key, a)
        if self.sigma is not None:
            s = np.broadcast_to(np.asarray(self.sigma, dtype=float), t.shape).copy()
            if np.any(s <= 0):
                raise ValueError("sigma must be positive")
            object.__setattr__(self, "sigma", s)
        object.__setattr__(self, "times", t)

    def component(self, name: str) -> np.ndarray:
        return {"plus1": self.p_plus1, "zero": self.p_zero}[name]


@dataclass(frozen=True)
class Chi2Scan:
    c_perp: np.ndarray
    chi2: np.ndarray
    component: str
    field: FieldConfig
    n_points: int
    errors: dict = field(default_factory=dict)
    label: str = ""

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.c_perp.tolist(), self.chi2.tolist()))


def _simulate_at(data: ExperimentTrace, p: SystemParams, r: RateModel, c: float, relax_time):
    order = np.argsort(data.times)
    trace = dnp_sequence(replace(p, c_perp=float(c)), data.field, r, data.times[order],
                         relax_time=relax_time)
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    return {"plus1": trace.p_plus1[inv], "zero": trace.p_zero[inv]}


def _chi2(model, data: ExperimentTrace, component):
    resid = model - data.component(component)
    if data.sigma is not None:
        resid = resid / data.sigma
    return float(np.mean(resid ** 2))


def chi2_scans(data: ExperimentTrace, p: SystemParams, r: RateModel, c_grid: Sequence[float],
               components: Iterable[str] = COMPONENTS, relax_time: float = 1.0,
               label: str = "") -> dict[str, Chi2Scan]:
    """Mean squared residuals versus C_perp for several components, one simulation per grid value."""
    components = tuple(components)
    for comp in components:
        if comp not in COMPONENTS:
            raise ValueError(f"component must be one of {COMPONENTS}")
    grid = np.asarray(c_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("c_grid must not be empty")
    chi = {comp: np.full(grid.size, np.nan) for comp in components}
    errors: dict[float, str] = {}
    for k, c in enumerate(grid):
        try:
            model = _simulate_at(data, p, r, c, relax_time)
        except Exception as exc:  # annotate and keep scanning
            errors[float(c)] = f"{type(exc).__name__}: {exc}"
            continue
        for comp in components:
            chi[comp][k] = _chi2(model[comp], data, comp)
    return {comp: Chi2Scan(grid.copy(), chi[comp], comp, data.field, data.times.size,
                           dict(errors), label) for comp in components}


def chi2_scan(data: ExperimentTrace, p: SystemParams, r: RateModel, c_grid: Sequence[float],
              component: str = "plus1", relax_time: float = 1.0) -> Chi2Scan:
    return chi2_scans(data, p, r, c_grid, (component,), relax_time)[component]


def default_c_grid() -> np.ndarray:
    return np.arange(-45.0, -5.0 + 0.5, 1.0)


def refined_grid(center: float, half_width: float = 3.0, step: float = 0.25) -> np.ndarray:
    n = int(round(2 * half_width / step))
    return center - half_width + step * np.arange(n + 1)


def merge_scans(a: Chi2Scan, b: Chi2Scan) -> Chi2Scan:
    c = np.concatenate([a.c_perp, b.c_perp])
    x = np.concatenate([a.chi2, b.chi2])
    c, first = np.unique(c, return_index=True)
    return replace(a, c_perp=c, chi2=x[first], errors={**a.errors, **b.errors})


def scan_cperp(data: ExperimentTrace, p: SystemParams, r: RateModel,
               coarse: Sequence[float] | None = None, refine: bool = True,
               components: Iterable[str] = COMPONENTS, relax_time: float = 1.0,
               label: str = "") -> dict[str, Chi2Scan]:
    """Coarse 1 MHz scan, then 0.25 MHz refinement around each component's minimum."""
    coarse = default_c_grid() if coarse is None else np.asarray(coarse, dtype=float)
    scans = chi2_scans(data, p, r, coarse, components, relax_time, label)
    if not refine:
        return scans
    centers = {}
    for comp, s in scans.items():
        if np.all(np.isnan(s.chi2)):
            continue
        centers[comp] = float(s.c_perp[np.nanargmin(s.chi2)])
    extra = np.unique(np.concatenate([refined_grid(c) for c in centers.values()])) \
        if centers else np.array([])
    extra = extra[(extra >= coarse.min()) & (extra <= coarse.max())]
    extra = np.setdiff1d(np.round(extra, 10), np.round(coarse, 10))
    if extra.size:
        fine = chi2_scans(data, p, r, extra, tuple(scans), relax_time, label)
        scans = {comp: merge_scans(scans[comp], fine[comp]) for comp in scans}
    return scans


@dataclass(frozen=True)
class ScanMinimum:
    c_perp: float
    width: float
    label: str
    component: str


@dataclass(frozen=True)
class CperpEstimate:
    c_perp_best: float
    uncertainty: float
    minima: list
    scans: list

    def as_dict(self) -> dict:
        return {
            "c_perp_best_mhz": self.c_perp_best,
            "uncertainty_mhz": self.uncertainty,
            "uncertainty_note": "statistical, conditional on the decay-rate table",
            "per_scan": [
                {"label": m.label, "component": m.component, "c_perp_mhz": m.c_perp,
                 "width_mhz": m.width} for m in self.minima],
            "scans": [
                {"label": s.label, "component": s.component, "b_gauss": s.field.b,
                 "theta_deg": s.field.theta, "c_perp_mhz": s.c_perp.tolist(),
                 "chi2": [None if not np.isfinite(v) else v for v in s.chi2.tolist()]}
                for s in self.scans],
        }


WINDOW_MHZ = 6.0
MIN_WIDTH_MHZ = 1e-3


def locate_minimum(scan: Chi2Scan, window: float = WINDOW_MHZ) -> ScanMinimum:
    """Quartic fit of chi2 around the discrete minimum; width from the local curvature.

    The width is the shift that raises the summed squared residuals by one
    noise variance, with the variance estimated from the minimum itself.
    """
    ok = np.isfinite(scan.chi2)
    c, x = scan.c_perp[ok], scan.chi2[ok]
    if c.size < 5:
        raise ValueError("need at least 5 finite scan points")
    k = int(np.argmin(x))
    if k == 0 or k == c.size - 1:
        raise GridBoundaryError(
            f"chi2 minimum at grid edge C_perp = {c[k]:g} MHz ({scan.label or scan.component}); "
            "widen the scan grid")
    sel = np.abs(c - c[k]) <= window
    cs, xs = c[sel], x[sel]
    deg = min(4, cs.size - 1)
    scale = max(np.ptp(cs), 1e-12)
    u = (cs - c[k]) / scale
    coef = np.polyfit(u, xs, deg)
    poly = np.poly1d(coef)
    crit = poly.deriv().roots
    crit = crit[np.abs(crit.imag) < 1e-9].real
    lo, hi = u.min(), u.max()
    crit = crit[(crit >= lo) & (crit <= hi)]
    cand = np.concatenate([crit, [0.0]])
    u_best = float(cand[np.argmin(poly(cand))])
    best = c[k] + u_best * scale
    curv = float(poly.deriv(2)(u_best)) / scale ** 2
    chi_min = max(float(poly(u_best)), 0.0)
    if curv <= 0:
        width = float(np.ptp(cs))
    else:
        width = math.sqrt(2.0 * chi_min / (scan.n_points * curv))
    return ScanMinimum(float(best), max(width, MIN_WIDTH_MHZ), scan.label, scan.component)


def estimate_cperp(scans: Sequence[Chi2Scan]) -> CperpEstimate:
    """Inverse-variance pooled C_perp over several (field, component) scans."""
    if not scans:
        raise ValueError("need at least one scan")
    minima = [locate_minimum(s) for s in scans]
    x = np.array([m.c_perp for m in minima])
    w = 1.0 / np.array([m.width for m in minima]) ** 2
    mean = float(np.sum(w * x) / np.sum(w))
    if len(minima) == 1:
        unc = minima[0].width
    else:
        unc = float(math.sqrt(np.sum(w * (x - mean) ** 2) / np.sum(w)))
    return CperpEstimate(mean, unc, minima, list(scans))


# ---------------------------------------------------------------------------
# field calibration


def _nu_pair(p: SystemParams, b: float, sin_sq: float):
    roots = _ground_roots(p.d_g, (p.gamma_e * b) ** 2, 1.0 - sin_sq)
    return np.array([roots[2] - roots[0], roots[1] - roots[0]])


def _theta_from_sin_sq(s):
    return math.degrees(math.asin(math.sqrt(min(max(s, 0.0), 1.0)))) + 0.0


def calibrate_field(nu_plus: float, nu_minus: float, p: SystemParams,
                    tol: float = 1e-6, max_iter: int = 50) -> FieldConfig:
    """Invert the two ground transition frequencies (MHz) for field magnitude and angle.

    The seed comes from Vieta's relations of the characteristic cubic, whose
    three roots are fixed by the two gaps and the trace 2 D_g.  Newton steps
    in (B, sin^2 theta) then polish it against the forward model; below the
    angular resolution theta is clamped to 0 and only B is solved.
    """
    if not nu_plus > nu_minus:
        raise CalibrationError("need nu_plus > nu_minus")
    band = p.gamma_e * MAX_CALIBRATION_FIELD
    for nu in (nu_plus, nu_minus):
        if not p.d_g - band <= nu <= p.d_g + band:
            raise CalibrationError(f"frequency {nu} MHz outside the calibrated band")
    d = p.d_g
    r0 = (2.0 * d - nu_plus - nu_minus) / 3.0
    r1, r2 = r0 + nu_minus, r0 + nu_plus
    zeeman_sq = d * d - (r0 * r1 + r0 * r2 + r1 * r2)
    if zeeman_sq <= 0:
        raise CalibrationError("frequencies imply no field")
    b = math.sqrt(zeeman_sq) / p.gamma_e
    s = -r0 * r1 * r2 / (d * zeeman_sq)
    if s > 1.0 + 1e-9:
        raise CalibrationError("frequencies imply no physical angle")
    target = np.array([nu_plus, nu_minus])
    s = min(max(s, 0.0), 1.0)
    for _ in range(max_iter):
        resid = _nu_pair(p, b, s) - target
        if np.max(np.abs(resid)) < tol:
            break
        hb = 1e-6 * max(b, 1.0)
        hs = 1e-7
        jb = (_nu_pair(p, b + hb, s) - _nu_pair(p, b - hb, s)) / (2 * hb)
        s_lo, s_hi = max(s - hs, 0.0), s + hs
        js = (_nu_pair(p, b, s_hi) - _nu_pair(p, b, s_lo)) / (s_hi - s_lo)
        jac = np.column_stack([jb, js])
        try:
            db, ds = np.linalg.solve(jac, -resid)
        except np.linalg.LinAlgError:
            db, ds = -resid.sum() / jb.sum(), 0.0
        b += db
        s += ds
        if s < 0:
            # below angular resolution: aligned-field 1-d solve in B
            s = 0.0
            for _ in range(max_iter):
                resid = _nu_pair(p, b, 0.0) - target
                if np.max(np.abs(resid)) < tol:
                    break
                jb = (_nu_pair(p, b + hb, 0.0) - _nu_pair(p, b - hb, 0.0)) / (2 * hb)
                b -= float(jb @ resid) / float(jb @ jb)
            break
    if not 0 <= b < MAX_CALIBRATION_FIELD:
        raise CalibrationError(f"no solution below {MAX_CALIBRATION_FIELD} G")
    return FieldConfig(float(b), _theta_from_sin_sq(s))


def steady_populations(p: SystemParams, f: FieldConfig, r: RateModel) -> tuple[float, float, float]:
    return populations(steady_state(build_liouvillian(p, f, r)))


def _golden_section(fn, lo, hi, tol):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


ANGLE_MAX_DEG = 5.0


def angle_chi2(theta: float, steady_data, p: SystemParams, r: RateModel) -> float:
    res = []
    for b, pp, p0 in steady_data:
        m = steady_populations(p, FieldConfig(float(b), theta), r)
        res += [m[0] - pp, m[1] - p0]
    return float(np.mean(np.square(res)))


def calibrate_angle(steady_data: Sequence[tuple[float, float, float]], p: SystemParams,
                    r: RateModel, step: float = 0.1, tol: float = 1e-4) -> float:
    """Angle (deg) whose model steady populations best match measured asymptotes.

    ``steady_data`` holds ``(B, P_plus1_inf, P_zero_inf)`` rows.
    """
    if not steady_data:
        raise ValueError("need at least one steady-state data point")
    grid = np.round(np.arange(0.0, ANGLE_MAX_DEG + step / 2, step), 10)
    values = np.array([angle_chi2(t, steady_data, p, r) for t in grid])
    k = int(np.argmin(values))
    if k == grid.size - 1:
        raise CalibrationError(
            f"angle fit hits the {ANGLE_MAX_DEG} deg bound; outside the small-angle model")
    lo, hi = grid[max(k - 1, 0)], grid[k + 1]
    theta = _golden_section(lambda t: angle_chi2(t, steady_data, p, r), lo, hi, tol)
    if angle_chi2(theta, steady_data, p, r) > values[k]:
        theta = float(grid[k])
    return float(theta)
