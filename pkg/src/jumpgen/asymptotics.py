"""Tail fits of computed kernels and checks of the resolvent tail theorems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FitWindowError
from .grid import Field, Grid
from .kernels import KernelSpec, mgf, sample_kernel, tail_class
from .reports import Check, Report, check_lower, check_upper
from .resolvent import NEGATIVE_TOL, resolvent_kernel_spectral

MIN_WINDOW_NODES = 16
MODEL_RESIDUAL_MAX = 0.1
BISECTION_TOL = 1e-12
BISECTION_MAX_ITER = 200
ROOT_REL_TOL = 1e-10
LAMBDA_RANGE = (0.02, 2.0)


@dataclass
class TailReport:
    model: str  # "polynomial" | "exponential"
    exponent: float  # fitted power s, or fitted rate r
    amplitude: float
    window: tuple[float, float]
    rms_residual: float
    checks: list[Check] = field(default_factory=list)
    in_scope: bool = True
    note: str | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.informational)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "fitted_exponent_or_rate": self.exponent,
            "amplitude": self.amplitude,
            "window": list(self.window),
            "rms_residual": self.rms_residual,
            "in_scope": self.in_scope,
            "note": self.note,
            "checks": [c.to_dict() for c in self.checks],
        }


@dataclass(frozen=True)
class DecayRateResult:
    case: str  # "pure_imaginary_root" | "no_root_below_c" | "heavy_tail"
    lam: float
    c: float
    q: float | None = None


def default_window(grid: Grid) -> tuple[float, float]:
    return grid.extent / 8, grid.extent / 4


def _window_samples(g: Field, window):
    grid = g.grid
    r_min, r_max = map(float, window)
    if not r_min < r_max:
        raise FitWindowError(f"window {window}: r_min must be below r_max")
    if r_max > grid.extent / 4 * (1 + 1e-12):
        raise FitWindowError(f"window {window} leaves the interior |x| <= L/4 = {grid.extent / 4}")
    r = grid.radius()
    sel = (r >= r_min) & (r <= r_max)
    if sel.sum() < MIN_WINDOW_NODES:
        raise FitWindowError(f"window {window} holds {sel.sum()} nodes, need {MIN_WINDOW_NODES}")
    vals = g.values[sel]
    vals = np.where((vals < 0) & (vals >= -NEGATIVE_TOL), 0.0, vals)
    if np.any(vals <= 0):
        raise FitWindowError(f"non-positive values inside window {window}")
    r = r[sel]
    if grid.dim == 1:
        return r, vals, np.ones_like(r)
    # radial shells of width h, weighted by population
    shell = np.floor(r / grid.spacing).astype(np.int64)
    shell -= shell.min()
    count = np.bincount(shell).astype(float)
    keep = count > 0
    mean_r = np.bincount(shell, weights=r)[keep] / count[keep]
    mean_v = np.bincount(shell, weights=vals)[keep] / count[keep]
    return mean_r, mean_v, count[keep]


def _weighted_line(x, y, w):
    sw = np.sqrt(w)
    A = np.column_stack([np.ones_like(x), x]) * sw[:, None]
    coef, *_ = np.linalg.lstsq(A, y * sw, rcond=None)
    resid = y - coef[0] - coef[1] * x
    rms = math.sqrt(float(np.sum(w * resid**2) / np.sum(w)))
    return float(coef[0]), float(coef[1]), rms


def _residual_check(rms: float) -> Check:
    return check_upper("model_residual", rms, MODEL_RESIDUAL_MAX)


def fit_polynomial_tail(g: Field, window=None) -> TailReport:
    """Fit ``log g = log A - s log(1+|x|)`` over the window."""
    window = tuple(window) if window is not None else default_window(g.grid)
    r, v, w = _window_samples(g, window)
    c0, c1, rms = _weighted_line(np.log1p(r), np.log(v), w)
    return TailReport("polynomial", -c1, math.exp(c0), window, rms, [_residual_check(rms)])


def fit_exponential_tail(g: Field, window=None) -> TailReport:
    """Fit ``log g = log A - r |x|`` over the window."""
    window = tuple(window) if window is not None else default_window(g.grid)
    r, v, w = _window_samples(g, window)
    c0, c1, rms = _weighted_line(r, np.log(v), w)
    return TailReport("exponential", -c1, math.exp(c0), window, rms, [_residual_check(rms)])


def decay_window(g: Field, upper: float = 1e-2, lower: float = 1e-10, r_floor: float = 0.0):
    """Window where ``g`` has dropped below ``upper*max`` but not below ``lower*max``.

    Keeps an exponential fit away from the near field and from FFT roundoff.
    """
    grid = g.grid
    r = grid.radius()
    peak = float(g.values.max())
    below = r[(g.values <= upper * peak) & (r >= r_floor)]
    above = r[g.values >= lower * peak]
    if below.size == 0 or above.size == 0:
        raise FitWindowError("field does not decay enough for a decay window")
    r_min = float(below.min())
    r_max = min(grid.extent / 4, float(above.max()))
    if not r_min < r_max:
        raise FitWindowError(f"decay window empty: [{r_min}, {r_max}]")
    return r_min, r_max


def solve_decay_rate(spec: KernelSpec, lam: float) -> DecayRateResult:
    """Root ``q`` of ``M(q) = 1 + lam`` below the kernel's log-rate ``c``."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if spec.dim != 1:
        raise ValueError("decay-rate equation is one-dimensional")
    tc = tail_class(spec)
    if tc.kind == "polynomial":
        return DecayRateResult("heavy_tail", lam, math.inf)
    target = 1.0 + lam
    c = tc.rate if tc.kind == "exponential" else math.inf
    if math.isfinite(c):
        hi = c * (1 - 1e-9)
        if mgf(spec, hi) <= target:
            return DecayRateResult("no_root_below_c", lam, c)
    else:
        hi = 1.0
        while mgf(spec, hi) <= target:
            hi *= 2
    lo = 0.0
    for _ in range(BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mgf(spec, mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= BISECTION_TOL:
            break
    q = 0.5 * (lo + hi)
    if abs(mgf(spec, q) - target) > ROOT_REL_TOL * target:
        # resolve the last few ulps where M is steep
        q = lo if abs(mgf(spec, lo) - target) < abs(mgf(spec, hi) - target) else hi
    return DecayRateResult("pure_imaginary_root", lam, c, q)


def _check_lambdas(lambdas) -> list[float]:
    lams = [float(x) for x in lambdas]
    if not lams:
        raise ValueError("empty lambda list")
    lo, hi = LAMBDA_RANGE
    bad = [x for x in lams if not lo - 1e-12 <= x <= hi + 1e-12]
    if bad:
        raise ValueError(f"lambdas {bad} outside [{lo}, {hi}]")
    if any(b >= a for a, b in zip(lams, lams[1:])):
        raise ValueError("lambda list must be strictly descending")
    return lams


def _loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def lemma_window(grid: Grid, alpha: float, lam: float) -> tuple[float, float]:
    """``[max(20h, 0.1 lam^-(alpha+1)/alpha), L/4]``."""
    start = max(20 * grid.spacing, 0.1 * lam ** (-(alpha + 1) / alpha))
    stop = grid.extent / 4
    if start >= stop:
        raise FitWindowError(
            f"lower-bound window infeasible for lambda={lam}: starts at {start:.4g} beyond L/4={stop:.4g}"
        )
    return start, stop


def verify_polynomial_theorem(
    spec: KernelSpec,
    lambdas,
    grid: Grid,
    *,
    fit_window=None,
    exponent_tol: float = 0.15,
    slope_slack: float = 0.25,
    spread_factor: float = 2.0,
) -> Report:
    """Tail exponent, sup-amplitude growth and the uniform lower bound for polynomial kernels."""
    tc = tail_class(spec)
    if tc.kind != "polynomial":
        raise ValueError(f"polynomial theorem needs a polynomial kernel, got {tc.kind}")
    lams = _check_lambdas(lambdas)
    alpha, d = tc.alpha, grid.dim
    power = d + alpha
    fit_window = tuple(fit_window) if fit_window is not None else default_window(grid)
    a = sample_kernel(spec, grid)
    r = grid.radius()

    report = Report("polynomial_tail_theorem", lambda_grid=lams)
    report.notices.append(
        "lower bound of the two-sided estimate is checked against (1+|x|)^-(d+alpha); "
        "a (d+|x|) weight differs from it only by a constant factor for d>=1"
    )
    p_plus, p_minus, lemma_windows, fits = [], [], [], []
    for lam in lams:
        g = resolvent_kernel_spectral(a, lam).g
        fit = fit_polynomial_tail(g, fit_window)
        fits.append(fit.to_dict())
        report.checks.append(
            check_upper(f"tail_exponent[lambda={lam:g}]", abs(fit.exponent - power), exponent_tol,
                        note=f"fitted {fit.exponent:.4f}, expected {power:g}")
        )
        lw = lemma_window(grid, alpha, lam)
        lemma_windows.append(list(lw))
        sel = (r >= lw[0]) & (r <= lw[1])
        weighted = np.clip(g.values[sel], 0.0, None) * (1 + r[sel]) ** power
        p_plus.append(float(weighted.max()))
        p_minus.append(float(lam * weighted.min()))
        typo = np.clip(g.values[sel], 0.0, None) * (d + r[sel]) ** power
        report.checks.append(
            Check(f"lower_bound_d_plus_x_form[lambda={lam:g}]", float(typo.min()), 0.0,
                  bool(typo.min() > 0), informational=True)
        )

    if len(lams) < 2:
        report.notices.append("single lambda: scaling checks skipped")
    else:
        slope = _loglog_slope(lams, p_plus)
        report.checks.append(check_lower("sup_amplitude_loglog_slope", slope, -(2 + power) - slope_slack))
        report.checks.append(check_lower("lower_bound_positive", min(p_minus), 0.0))
        spread = max(p_minus) / min(p_minus) if min(p_minus) > 0 else math.inf
        report.checks.append(check_upper("lower_bound_lambda_uniform_spread", spread, spread_factor))
    report.window = [list(fit_window) for _ in lams]
    report.data = {
        "alpha": alpha,
        "dim": d,
        "fits": fits,
        "lemma_windows": lemma_windows,
        "P_plus": p_plus,
        "P_minus": p_minus,
    }
    return report


def verify_exponential_theorem(
    spec: KernelSpec,
    lambdas,
    grid: Grid,
    *,
    window=None,
    rate_tol: float = 0.03,
    slope_target: float = 0.5,
    slope_tol: float = 0.05,
    slope_lambda_max: float = 0.2,
    amplitude_tol: float = 0.05,
) -> Report:
    """Fitted decay rates against the decay-rate equation and the square-root law."""
    if grid.dim != 1 or spec.dim != 1:
        raise ValueError("exponential-rate theorem is checked in d = 1")
    tc = tail_class(spec)
    if tc.kind != "exponential":
        raise ValueError(f"exponential theorem needs an exponential kernel, got {tc.kind}")
    lams = _check_lambdas(lambdas)
    a = sample_kernel(spec, grid)
    report = Report("exponential_tail_theorem", lambda_grid=lams)
    windows, rates, roots, fits = [], [], [], []
    for lam in lams:
        g = resolvent_kernel_spectral(a, lam).g
        w = tuple(window) if window is not None else decay_window(g)
        fit = fit_exponential_tail(g, w)
        windows.append(list(w))
        rates.append(fit.exponent)
        fits.append(fit.to_dict())
        dr = solve_decay_rate(spec, lam)
        roots.append(dr.q)
        if dr.case == "pure_imaginary_root":
            rel = abs(fit.exponent - dr.q) / dr.q
            report.checks.append(
                check_upper(f"rate_matches_root[lambda={lam:g}]", rel, rate_tol,
                            note=f"fitted {fit.exponent:.6f}, root {dr.q:.6f}")
            )
            if spec.family == "laplace":
                expected = spec.delta**2 / (2 * (1 + lam) * dr.q)
                report.checks.append(
                    check_upper(f"amplitude_matches_residue[lambda={lam:g}]",
                                abs(fit.amplitude - expected) / expected, amplitude_tol)
                )
        else:
            eps = 0.05 * dr.c
            inside = dr.c - eps <= fit.exponent <= dr.c + eps
            report.checks.append(
                Check(f"rate_in_band[lambda={lam:g}]", fit.exponent, dr.c, inside, informational=True,
                      note="no root below c: only the eps-loosened two-sided bound applies")
            )
    small = [(lam, r) for lam, r in zip(lams, rates) if lam <= slope_lambda_max + 1e-12]
    if len(small) < 2:
        report.notices.append(f"fewer than two lambdas <= {slope_lambda_max}: slope check skipped")
    else:
        slope = _loglog_slope([s[0] for s in small], [s[1] for s in small])
        report.checks.append(check_upper("sqrt_lambda_law_slope", abs(slope - slope_target), slope_tol,
                                         note=f"slope {slope:.4f}"))
    report.window = windows
    report.data = {"fitted_rates": rates, "roots": roots, "fits": fits}
    return report
