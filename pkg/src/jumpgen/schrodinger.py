"""Principal eigenpair of ``L = L0 + V`` for compactly supported ``0 <= V <= 1``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .asymptotics import (
    TailReport,
    decay_window,
    default_window,
    fit_exponential_tail,
    fit_polynomial_tail,
    solve_decay_rate,
)
from .errors import ConvergenceError, GridMismatchError
from .grid import Field, Grid, check_same_grid, transform
from .kernels import KernelSpec, tail_class
from .reports import Check, check_upper
from .resolvent import apply_symbol, convolve, resolvent_kernel_spectral

DEFAULT_MAX_ITER = 100_000
EXPONENT_TOL = 0.15
RATE_TOL = 0.03


@dataclass(frozen=True, eq=False)
class Potential:
    support_radius: float
    profile: str = "box"  # "box" | "tabulated"
    height: float = 1.0
    table: Field | None = None

    def __post_init__(self):
        if not self.support_radius > 0:
            raise ValueError("support_radius must be positive")
        if self.profile == "box":
            if not 0 < self.height <= 1:
                raise ValueError("box height must lie in (0, 1]")
        elif self.profile == "tabulated":
            if self.table is None:
                raise ValueError("tabulated potential needs a table")
            v = self.table.values
            if v.min() < 0 or v.max() > 1:
                raise ValueError("potential must satisfy 0 <= V <= 1")
            outside = self.table.grid.radius() > self.support_radius
            if np.any(v[outside] != 0):
                raise ValueError("potential must vanish beyond support_radius")
        else:
            raise ValueError(f"unknown potential profile {self.profile!r}")

    @classmethod
    def box(cls, height: float, support_radius: float) -> Potential:
        return cls(support_radius, "box", height)

    def realize(self, grid: Grid) -> Field:
        if self.profile == "box":
            return Field(grid, np.where(grid.radius() <= self.support_radius, self.height, 0.0))
        if self.table.grid != grid:
            raise GridMismatchError("tabulated potential lives on a different grid")
        return self.table

    def to_dict(self) -> dict:
        out = {"profile": self.profile, "support_radius": self.support_radius}
        if self.profile == "box":
            out["height"] = self.height
        return out


@dataclass(frozen=True, eq=False)
class GroundState:
    lam: float
    psi: Field
    iterations: int
    residual: float
    edge_detected: bool
    rayleigh_history: tuple[float, ...] = ()

    def sidecar(self) -> dict:
        return {
            "lambda": self.lam,
            "iterations": self.iterations,
            "residual": self.residual,
            "edge_detected": self.edge_detected,
        }


def principal_eigenpair(
    a: Field,
    V: Potential | Field,
    tol: float = 1e-10,
    *,
    max_iter: int = DEFAULT_MAX_ITER,
    start: Field | None = None,
    keep_history: bool = False,
) -> GroundState:
    """Power iteration on ``A = S_a + V``; the eigenvalue of ``L`` is ``mu - 1``.

    Starts from the indicator of ``supp V`` unless ``start`` is given.  When
    the converged ``mu`` is within ``10*tol`` of the edge ``mu = 1`` the result
    is flagged ``edge_detected``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    grid = a.grid
    v = V.realize(grid) if isinstance(V, Potential) else V
    check_same_grid(a, v)
    v = v.values
    a_hat = transform(a).values

    if start is not None:
        check_same_grid(a, start)
        x = np.array(start.values, dtype=float)
    elif np.any(v > 0):
        x = (v > 0).astype(float)
    else:
        x = np.ones(grid.size)
    if not np.any(x > 0) or np.any(x < 0):
        raise ValueError("start vector must be nonnegative and nonzero")
    x /= np.max(x)

    history = []
    mu = np.nan
    for it in range(1, max_iter + 1):
        y = apply_symbol(a_hat, x, grid.shape) + v * x
        mu = float(x @ y / (x @ x))
        if keep_history:
            history.append(mu)
        residual = float(np.max(np.abs(y - mu * x)))
        if residual <= tol:
            break
        x = y / np.max(y)
    else:
        raise ConvergenceError(
            f"power iteration did not converge in {max_iter} iterations (Rayleigh quotient {mu})", mu
        )
    edge = mu <= 1.0 + 10 * tol
    return GroundState(mu - 1.0, Field(grid, x), it, residual, bool(edge), tuple(history))


def rayleigh_quotient(a: Field, V: Potential | Field, trial: Field) -> float:
    """``<u, A u> / <u, u>`` for ``A = S_a + V``."""
    v = V.realize(a.grid) if isinstance(V, Potential) else V
    u = trial.values
    au = convolve(a, trial).values + v.values * u
    return float(u @ au / (u @ u))


def groundstate_residual(a: Field, V: Potential | Field, gs: GroundState) -> float:
    """Sup mismatch between ``psi`` and ``(F + G_lam * F)/(1+lam)``, ``F = V psi``."""
    if gs.edge_detected:
        raise ValueError("no ground state above the edge to check")
    if not gs.lam > 0:
        raise ValueError("lambda must be positive")
    v = V.realize(a.grid) if isinstance(V, Potential) else V
    F = Field(a.grid, v.values * gs.psi.values)
    G = resolvent_kernel_spectral(a, gs.lam).g
    rhs = (F.values + convolve(G, F).values) / (1.0 + gs.lam)
    return float(np.max(np.abs(rhs - gs.psi.values)))


def groundstate_tail_report(
    gs: GroundState, spec: KernelSpec, window=None, *, support_radius: float = 0.0
) -> TailReport:
    """Tail of ``psi`` against the rate or power predicted by the kernel's tail class."""
    if gs.edge_detected:
        raise ValueError("no ground state above the edge to report on")
    psi = gs.psi
    d = psi.grid.dim
    tc = tail_class(spec)
    if tc.kind == "polynomial":
        rep = fit_polynomial_tail(psi, window if window is not None else default_window(psi.grid))
        power = d + tc.alpha
        rep.checks.append(
            check_upper("psi_tail_exponent", abs(rep.exponent - power), EXPONENT_TOL,
                        note=f"fitted {rep.exponent:.4f}, expected {power:g}")
        )
        return rep
    w = window if window is not None else decay_window(psi, r_floor=support_radius)
    rep = fit_exponential_tail(psi, w)
    if tc.kind != "exponential" or d != 1:
        rep.in_scope = False
        rep.note = f"{tc.kind} kernel in d={d}: outside the ground-state tail statements"
        return rep
    dr = solve_decay_rate(spec, gs.lam)
    if dr.case == "pure_imaginary_root":
        rel = abs(rep.exponent - dr.q) / dr.q
        rep.checks.append(
            check_upper("psi_tail_rate", rel, RATE_TOL, note=f"fitted {rep.exponent:.6f}, root {dr.q:.6f}")
        )
    else:
        eps = 0.05 * dr.c
        rep.checks.append(
            Check("psi_rate_in_band", rep.exponent, dr.c, dr.c - eps <= rep.exponent <= dr.c + eps,
                  informational=True, note="no root below c: eps-loosened bounds only")
        )
    return rep
