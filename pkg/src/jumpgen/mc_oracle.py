"""Monte Carlo oracle: geometrically stopped random walks with step density ``a``.

If ``P(K = k) = lam (1+lam)^-k`` for ``k >= 1`` then ``S_K`` has density
``lam G_lam``, which gives an estimator of the resolvent kernel that shares no
code with the spectral or series solvers.  Fixed-``n`` walks give the
survival function of ``|S_n|`` for the tail dichotomy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _walks
from .grid import Field, Grid, check_same_grid, write_field_csv
from .kernels import KernelSpec, _loglinear_fit, mgf, tail_class
from .reports import Check, Report, check_upper

MIN_VERDICT_WALKS = 1000
MIN_EXCEEDANCES = 50
OVERFLOW_WARN = 0.05
CHUNK = 1 << 20
MIN_REGIME_RADII = 3
REGIME_RESIDUAL_MAX = 0.1

_FAMILY_CODES = {
    "laplace": _walks.LAPLACE,
    "gaussian": _walks.GAUSSIAN,
    "polynomial": _walks.POLYNOMIAL,
    "tabulated": _walks.TABULATED,
}


@dataclass(frozen=True)
class WalkConfig:
    spec: KernelSpec
    seed: int
    n_walks: int
    grid: Grid

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if int(self.n_walks) < 1:
            raise ValueError("n_walks must be positive")
        if self.spec.dim != self.grid.dim:
            raise ValueError(f"kernel dim {self.spec.dim} vs grid dim {self.grid.dim}")

    def require_verdict_size(self) -> None:
        if self.n_walks < MIN_VERDICT_WALKS:
            raise ValueError(f"statistical verdicts need n_walks >= {MIN_VERDICT_WALKS}, got {self.n_walks}")


def _walk_params(spec: KernelSpec) -> dict:
    code = _FAMILY_CODES[spec.family]
    if spec.family == "laplace":
        return {"family": code, "param": spec.delta}
    if spec.family == "gaussian":
        return {"family": code, "param": spec.sigma}
    if spec.family == "polynomial":
        return {"family": code, "param": spec.alpha}
    # lattice walk on the table's own grid: cell i is drawn with weight a_i h^d
    tg = spec.table.grid
    return {
        "family": code,
        "param": 0.0,
        "alias": _walks.build_alias(spec.table.values),
        "table_n": tg.points_per_axis,
        "table_h": tg.spacing,
    }


def _chunks(total: int):
    start = 0
    while start < total:
        size = min(CHUNK, total - start)
        yield start, size
        start += size


def sample_steps(spec: KernelSpec, size: int, seed: int, *, backend: str | None = None) -> np.ndarray:
    """``size`` independent draws from ``a``, shape ``(size, d)``."""
    out = [
        _walks.run_walks(seed, start, count, dim=spec.dim, n_fixed=1, backend=backend, **_walk_params(spec))[0]
        for start, count in _chunks(size)
    ]
    return np.concatenate(out, axis=0)


def _cell_index(x: np.ndarray, grid: Grid) -> np.ndarray:
    """Flat cell index of each endpoint, or -1 outside the box."""
    n, h = grid.points_per_axis, grid.spacing
    j = np.floor(x / h + n / 2 + 0.5).astype(np.int64)
    inside = np.all((j >= 0) & (j < n), axis=1)
    flat = j[:, 0] if grid.dim == 1 else j[:, 0] * n + j[:, 1]
    return np.where(inside, flat, -1)


@dataclass(frozen=True, eq=False)
class MCResult:
    lam: float
    estimate: Field
    stderr: Field
    counts: np.ndarray = field(repr=False)
    overflow: int
    n_walks: int
    seed: int
    mean_k: float
    warnings: tuple[str, ...] = ()

    @property
    def overflow_fraction(self) -> float:
        return self.overflow / self.n_walks

    @property
    def total_mass(self) -> float:
        """Histogram mass including the overflow bucket; 1 by construction."""
        return (int(self.counts.sum()) + self.overflow) / self.n_walks

    def manifest(self) -> dict:
        return {
            "seed": self.seed,
            "n_walks": self.n_walks,
            "lambda": self.lam,
            "overflow_fraction": self.overflow_fraction,
            "mean_K": self.mean_k,
            "warnings": list(self.warnings),
        }

    def write(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_field_csv(self.estimate, directory / "mc_estimate.csv")
        write_field_csv(self.stderr, directory / "mc_stderr.csv")
        (directory / "mc_manifest.json").write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")


def estimate_resolvent_mc(spec: KernelSpec, lam: float, config: WalkConfig, *, backend: str | None = None) -> MCResult:
    """Histogram estimate of ``lam G_lam`` with binomial standard errors per cell."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    grid = config.grid
    params = _walk_params(spec)
    counts = np.zeros(grid.size, dtype=np.int64)
    overflow = 0
    k_total = 0
    for start, size in _chunks(config.n_walks):
        x, k = _walks.run_walks(config.seed, start, size, dim=spec.dim, lam=lam, backend=backend, **params)
        k_total += int(k.sum())
        cells = _cell_index(x, grid)
        out = cells < 0
        overflow += int(out.sum())
        counts += np.bincount(cells[~out], minlength=grid.size)
    n = config.n_walks
    p = counts / n
    vol = grid.cell_volume
    notes = []
    if overflow / n > OVERFLOW_WARN:
        notes.append(f"overflow fraction {overflow / n:.3f} exceeds {OVERFLOW_WARN}: enlarge the box")
    return MCResult(
        lam,
        Field(grid, p / vol),
        Field(grid, np.sqrt(p * (1 - p) / n) / vol),
        counts,
        overflow,
        n,
        int(config.seed),
        k_total / n,
        tuple(notes),
    )


def agreement_report(mc: MCResult, g_spectral: Field, *, radius: float = 3.0, n_sigma: float = 3.0,
                     min_fraction: float = 0.99, k_rel_tol: float = 0.01) -> Report:
    """MC histogram against ``lam * G_lam`` from a deterministic solver, plus ``E[K]``."""
    grid = check_same_grid(mc.estimate, g_spectral)
    sel = grid.radius() <= radius
    truth = mc.lam * g_spectral.values[sel]
    diff = np.abs(mc.estimate.values[sel] - truth)
    se = mc.stderr.values[sel]
    within = np.where(se > 0, diff <= n_sigma * se, diff == 0)
    frac = float(within.mean())
    expected_k = (1 + mc.lam) / mc.lam
    k_err = abs(mc.mean_k - expected_k) / expected_k
    rep = Report("mc_resolvent_agreement", lambda_grid=[mc.lam], notices=list(mc.warnings))
    rep.checks.append(
        Check("cells_within_3_stderr", frac, min_fraction, frac >= min_fraction,
              note=f"{int(within.sum())} of {within.size} cells with |x| <= {radius}")
    )
    rep.checks.append(check_upper("mean_K_relative_error", k_err, k_rel_tol, note=f"E[K] = {expected_k:g}"))
    rep.checks.append(check_upper("total_mass_error", abs(mc.total_mass - 1.0), 0.0))
    rep.data = {"manifest": mc.manifest()}
    return rep


def step_survival(spec: KernelSpec, r) -> np.ndarray:
    """``P(|X| > r)`` for one step of an analytic family."""
    r = np.asarray(r, dtype=float)
    d = spec.dim
    if spec.family == "laplace":
        s = spec.delta * r
        return np.exp(-s) if d == 1 else (1 + s) * np.exp(-s)
    if spec.family == "gaussian":
        if d == 1:
            return np.vectorize(math.erfc)(r / (spec.sigma * math.sqrt(2.0)))
        return np.exp(-0.5 * (r / spec.sigma) ** 2)
    if spec.family == "polynomial":
        a = spec.alpha
        T = 1.0 + r
        return T**-a if d == 1 else (1 + a) * T**-a - a * T ** -(1 + a)
    raise ValueError("step survival is closed-form for analytic families only")


def moderate_constant(spec: KernelSpec, samples: int = 400) -> tuple[float, float]:
    """``(delta, c1)`` with ``c1 = max_{0<k<=delta/2} log M(k) / k^2``.

    The walk-tail bounds switch from Gaussian to exponential shape at
    ``r = delta c1 n``.
    """
    tc = tail_class(spec)
    if tc.kind != "exponential":
        raise ValueError(f"walk-tail dichotomy needs an exponential-class kernel, got {tc.kind}")
    delta = tc.rate
    ks = np.linspace(delta / 2 / samples, delta / 2, samples)
    c1 = max(math.log(mgf(spec, k)) / k**2 for k in ks)
    return delta, c1


def walk_survival(spec: KernelSpec, n: int, config: WalkConfig, radii, *, backend: str | None = None) -> np.ndarray:
    """Exceedance counts ``#{|S_n| > r}`` at each radius."""
    radii = np.asarray(radii, dtype=float)
    params = _walk_params(spec)
    counts = np.zeros(radii.size, dtype=np.int64)
    for start, size in _chunks(config.n_walks):
        x, _ = _walks.run_walks(config.seed, start, size, dim=spec.dim, n_fixed=n, backend=backend, **params)
        norm = np.sqrt(np.sum(x * x, axis=1))
        # number of radii strictly below each |S_n|
        below = np.searchsorted(radii, norm, side="left")
        hist = np.bincount(below, minlength=radii.size + 1)
        counts += np.cumsum(hist[::-1])[::-1][1:]
    return counts


def _regime_checks(prefix: str, r: np.ndarray, logp: np.ndarray, preferred: str) -> tuple[list[Check], dict]:
    _, _, res_gauss = _loglinear_fit(r**2, logp)
    _, slope_exp, res_exp = _loglinear_fit(r, logp)
    if preferred == "gaussian":
        mine, other, label = res_gauss, res_exp, "gaussian"
    else:
        mine, other, label = res_exp, res_gauss, "exponential"
    checks = [
        Check(f"{prefix}_{label}_preferred", mine, other, bool(mine < other),
              note=f"rms residual of the {label} fit vs the other model"),
        check_upper(f"{prefix}_{label}_residual", mine, REGIME_RESIDUAL_MAX),
    ]
    return checks, {"radii": r.tolist(), "gaussian_residual": res_gauss,
                    "exponential_residual": res_exp, "exponential_slope": slope_exp}


def walk_tail_report(spec: KernelSpec, n: int, config: WalkConfig, radii, *, backend: str | None = None) -> Report:
    """Shape of ``P(|S_n| > r)``: Gaussian below the crossover, exponential above.

    Radii with fewer than 50 exceedances are dropped with a notice.  Each
    regime needs three radii to be judged.
    """
    if spec.dim != 1:
        raise ValueError("walk-tail report is implemented for d = 1")
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    config.require_verdict_size()
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size == 0 or np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be positive and strictly increasing")
    delta, c1 = moderate_constant(spec)
    crossover = delta * c1 * n

    counts = walk_survival(spec, n, config, radii, backend=backend)
    surv = counts / config.n_walks
    rep = Report(f"walk_tail_n{n}")
    keep = counts >= MIN_EXCEEDANCES
    for r, c in zip(radii[~keep], counts[~keep]):
        rep.notices.append(f"radius {r:g} excluded: {int(c)} exceedances < {MIN_EXCEEDANCES}")
    r_kept, logp = radii[keep], np.log(surv[keep])
    regimes = {}
    for prefix, mask, preferred in (
        ("moderate_regime", r_kept <= crossover, "gaussian"),
        ("large_regime", r_kept > crossover, "exponential"),
    ):
        m = int(mask.sum())
        if m >= MIN_REGIME_RADII:
            checks, info = _regime_checks(prefix, r_kept[mask], logp[mask], preferred)
            rep.checks.extend(checks)
            regimes[prefix] = info
        elif m:
            rep.notices.append(f"{prefix}: only {m} usable radii, not judged")

    if n == 1 and spec.is_analytic and keep.any():
        exact = step_survival(spec, r_kept)
        se = np.sqrt(exact * (1 - exact) / config.n_walks)
        z = float(np.max(np.abs(surv[keep] - exact) / se))
        rep.checks.append(check_upper("single_step_survival_zscore", z, 4.0))
    if not any(not c.informational for c in rep.checks):
        rep.notices.append("no verdicts: every regime lacked usable radii")
    rep.window = [float(radii[0]), float(radii[-1])]
    rep.data = {
        "n": n,
        "crossover_radius": crossover,
        "c1": c1,
        "radii": radii.tolist(),
        "exceedances": counts.tolist(),
        "survival": surv.tolist(),
        "regimes": regimes,
        "seed": int(config.seed),
        "n_walks": config.n_walks,
    }
    return rep
