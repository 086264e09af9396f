"""Resolvent kernel of the jump generator ``L0 u = a * u - u``.

``G_lam`` is the kernel of ``sum_{k>=1} S_a^k / (1+lam)^k``.  On the torus it
is computed two ways: by the closed spectral resummation
``a_hat / (1 + lam - a_hat)`` and by the truncated series itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NegativeValueError, TruncationCapError
from .grid import Field, SpectralField, check_same_grid, integrate, inverse_transform, transform

NEGATIVE_TOL = 1e-10
DEFAULT_TERM_CAP = 10**6


@dataclass(frozen=True, eq=False)
class ResolventResult:
    lam: float
    g: Field
    method: str  # "spectral" | "neumann"
    terms: int | None = None
    truncation_bound: float = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        low = float(self.g.values.min())
        if low < -NEGATIVE_TOL:
            raise NegativeValueError(f"G_lambda has value {low:.3e} below -{NEGATIVE_TOL}")

    def mass_error(self) -> float:
        """``|integrate(g) - 1/lam|``."""
        return abs(integrate(self.g) - 1.0 / self.lam)

    def mass_tolerance(self) -> float:
        g = self.g.grid
        return max(1e-8, self.truncation_bound * g.extent**g.dim)

    def sidecar(self) -> dict:
        return {
            "lambda": self.lam,
            "method": self.method,
            "K": self.terms,
            "truncation_bound": self.truncation_bound,
        }


def apply_symbol(a_hat: np.ndarray, u: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Convolve flat node values ``u`` with the kernel whose transform is ``a_hat``."""
    u_hat = np.fft.fftn(np.fft.ifftshift(u.reshape(shape)))
    out = np.fft.ifftn(a_hat.reshape(shape) * u_hat)
    return np.fft.fftshift(out).real.ravel()


def convolve(a: Field, u: Field) -> Field:
    """Periodic convolution ``h^d sum_j a(x - y_j) u(y_j)``."""
    grid = check_same_grid(a, u)
    return Field(grid, apply_symbol(transform(a).values, u.values, grid.shape))


def apply_generator(a: Field, u: Field) -> Field:
    return Field(u.grid, convolve(a, u).values - u.values)


def kernel_power(a: Field, k: int) -> Field:
    """``a_k = a^{*k}`` via the k-th power of the symbol."""
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    if k == 1:
        return a
    a_hat = transform(a)
    return inverse_transform(SpectralField(a.grid, a_hat.values**k))


def resolvent_kernel_spectral(a: Field, lam: float) -> ResolventResult:
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    a_hat = transform(a).values
    g_hat = a_hat / (1.0 + lam - a_hat)
    g = inverse_transform(SpectralField(a.grid, g_hat))
    return ResolventResult(lam, g, "spectral")


def neumann_terms(sup_a: float, lam: float, tol: float) -> int:
    """Smallest K with ``sup_a (1+lam)^-K / lam <= tol``."""
    need = math.log(sup_a / (lam * tol)) / math.log1p(lam)
    return max(1, math.ceil(need - 1e-12))


def resolvent_kernel_neumann(
    a: Field, lam: float, tol: float, *, max_terms: int = DEFAULT_TERM_CAP
) -> ResolventResult:
    """Partial sum of the series with a sup-norm tail bound below ``tol``.

    Uses ``sup|a_k| <= sup|a|``, so the neglected tail is at most
    ``sup|a| (1+lam)^-K / lam``.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    sup_a = a.sup()
    K = neumann_terms(sup_a, lam, tol)
    if K > max_terms:
        raise TruncationCapError(
            f"lambda too small for requested tol: needs {K} terms, cap is {max_terms}"
        )
    a_hat = transform(a).values
    ratio = 1.0 / (1.0 + lam)
    term = a.values * ratio
    total = term.copy()
    for _ in range(K - 1):
        term = apply_symbol(a_hat, term, a.grid.shape) * ratio
        total += term
    bound = sup_a * ratio**K / lam
    return ResolventResult(lam, Field(a.grid, total), "neumann", terms=K, truncation_bound=bound)
