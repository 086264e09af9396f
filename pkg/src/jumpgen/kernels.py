"""Dispersal kernel families.

Every analytic family is a radial probability density on R^d with its exact
normalizing constant:

* laplace: ``(delta/2) exp(-delta r)`` for d = 1, ``delta^2/(2 pi) exp(-delta r)`` for d = 2
* gaussian: ``(2 pi sigma^2)^(-d/2) exp(-r^2 / (2 sigma^2))``
* polynomial: ``(alpha/2) (1+r)^-(1+alpha)`` for d = 1,
  ``alpha (1+alpha)/(2 pi) (1+r)^-(2+alpha)`` for d = 2

Tabulated kernels carry a :class:`~jumpgen.grid.Field` and are renormalized to
unit discrete mass when sampled.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GridMismatchError, KernelResolutionError, MGFUnreliableError
from .grid import Field, Grid, SpectralField, read_field_csv, transform

FAMILIES = ("laplace", "gaussian", "polynomial", "tabulated")

MASS_GUARD = (0.9, 1.1)
MGF_EDGE_RATIO = 1e-8
TAIL_RESIDUAL_MAX = 0.1


@dataclass(frozen=True, eq=False)
class KernelSpec:
    family: str
    dim: int = 1
    delta: float | None = None
    sigma: float | None = None
    alpha: float | None = None
    table: Field | None = None
    source: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        required = {"laplace": "delta", "gaussian": "sigma", "polynomial": "alpha"}
        if self.family in required:
            name = required[self.family]
            value = getattr(self, name)
            if value is None or not value > 0:
                raise ValueError(f"{self.family} kernel needs a positive {name}")
            object.__setattr__(self, name, float(value))
        else:
            if self.table is None:
                raise ValueError("tabulated kernel needs a table field")
            if self.table.grid.dim != self.dim:
                raise ValueError("tabulated kernel dimension does not match its table")
            vals = self.table.values
            if np.any(vals < 0):
                raise ValueError("tabulated kernel must be nonnegative")
            if not np.array_equal(vals, vals[self.table.grid.mirror_index()]):
                raise ValueError("tabulated kernel must be even on its grid")

    @classmethod
    def laplace(cls, delta: float, dim: int = 1) -> KernelSpec:
        return cls("laplace", dim, delta=delta)

    @classmethod
    def gaussian(cls, sigma: float, dim: int = 1) -> KernelSpec:
        return cls("gaussian", dim, sigma=sigma)

    @classmethod
    def polynomial(cls, alpha: float, dim: int = 1) -> KernelSpec:
        return cls("polynomial", dim, alpha=alpha)

    @classmethod
    def tabulated(cls, table: Field, source: str | None = None) -> KernelSpec:
        return cls("tabulated", table.grid.dim, table=table, source=source)

    @property
    def is_analytic(self) -> bool:
        return self.family != "tabulated"

    def density(self, r) -> np.ndarray:
        """Continuum density as a function of the radius."""
        r = np.asarray(r, dtype=float)
        d = self.dim
        if self.family == "laplace":
            c = self.delta / 2 if d == 1 else self.delta**2 / (2 * np.pi)
            return c * np.exp(-self.delta * r)
        if self.family == "gaussian":
            s2 = self.sigma**2
            return (2 * np.pi * s2) ** (-d / 2) * np.exp(-(r**2) / (2 * s2))
        if self.family == "polynomial":
            a = self.alpha
            c = a / 2 if d == 1 else a * (1 + a) / (2 * np.pi)
            return c * (1 + r) ** (-(d + a))
        raise ValueError("tabulated kernels have no continuum density")

    def to_dict(self) -> dict:
        out: dict = {"family": self.family, "dim": self.dim}
        for name in ("delta", "sigma", "alpha"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        if self.family == "tabulated":
            out["file"] = self.source
        return out

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path | None = None) -> KernelSpec:
        family = data["family"]
        dim = int(data.get("dim", 1))
        if family == "tabulated":
            path = Path(data["file"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            return cls.tabulated(read_field_csv(path), source=str(data["file"]))
        params = {k: data[k] for k in ("delta", "sigma", "alpha") if k in data}
        return cls(family, dim, **params)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str, base_dir: str | Path | None = None) -> KernelSpec:
        return cls.from_dict(json.loads(text), base_dir)


@dataclass(frozen=True)
class TailClass:
    kind: str  # polynomial | exponential | super_exponential | unclassified
    alpha: float | None = None
    rate: float | None = None
    residual: float | None = None


def sample_kernel(spec: KernelSpec, grid: Grid, *, return_scale: bool = False):
    """Sample ``a`` at the nodes and rescale to unit discrete mass.

    The rescaling factor must lie in ``[0.9, 1.1]``; otherwise the grid cannot
    hold the kernel and :class:`KernelResolutionError` is raised.
    """
    if grid.dim != spec.dim:
        raise GridMismatchError(f"kernel dim {spec.dim} vs grid dim {grid.dim}")
    if spec.is_analytic:
        raw = spec.density(grid.radius())
    else:
        if spec.table.grid != grid:
            raise GridMismatchError("tabulated kernel lives on a different grid")
        raw = np.array(spec.table.values)
    mass = grid.cell_volume * float(np.sum(raw))
    scale = 1.0 / mass if mass > 0 else math.inf
    if not MASS_GUARD[0] <= scale <= MASS_GUARD[1]:
        raise KernelResolutionError(
            f"rescaling factor {scale:.4g} outside {MASS_GUARD}: grid too coarse or too small"
        )
    field = Field(grid, raw * scale)
    return (field, scale) if return_scale else field


def symbol(spec: KernelSpec, grid: Grid) -> SpectralField:
    """Fourier symbol on the dual grid; closed form where one exists."""
    if grid.dim != spec.dim:
        raise GridMismatchError(f"kernel dim {spec.dim} vs grid dim {grid.dim}")
    p = grid.frequency_modulus()
    if spec.family == "laplace":
        u = (p / spec.delta) ** 2
        vals = 1.0 / (1.0 + u) if spec.dim == 1 else (1.0 + u) ** -1.5
    elif spec.family == "gaussian":
        vals = np.exp(-0.5 * (spec.sigma * p) ** 2)
    else:
        return transform(sample_kernel(spec, grid))
    return SpectralField(grid, vals.astype(complex))


def mgf(spec: KernelSpec, q: float) -> float:
    """``M(q) = integral a(x) exp(q x) dx`` in one dimension (may be ``inf``)."""
    if spec.dim != 1:
        raise ValueError("mgf is defined for d = 1 only")
    if q < 0:
        raise ValueError("q must be nonnegative")
    if spec.family == "laplace":
        d = spec.delta
        return d * d / (d * d - q * q) if q < d else math.inf
    if spec.family == "gaussian":
        return math.exp(0.5 * (q * spec.sigma) ** 2)
    if spec.family == "polynomial":
        return 1.0 if q == 0 else math.inf
    a = sample_kernel(spec, spec.table.grid)
    x = a.grid.axis()
    integrand = a.values * np.cosh(q * x)
    edge = max(integrand[0], integrand[-1])
    if edge >= MGF_EDGE_RATIO * integrand.max():
        raise MGFUnreliableError(f"MGF unreliable at q={q}: integrand not decayed at the box edge")
    return float(a.grid.spacing * integrand.sum())


def _loglinear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least squares ``y = c0 + c1 x``; returns (c0, c1, rms residual)."""
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid**2)))


def tail_class(spec: KernelSpec) -> TailClass:
    if spec.family == "polynomial":
        return TailClass("polynomial", alpha=spec.alpha)
    if spec.family == "laplace":
        return TailClass("exponential", rate=spec.delta)
    if spec.family == "gaussian":
        return TailClass("super_exponential")

    grid = spec.table.grid
    r = grid.radius()
    sel = (r >= grid.extent / 8) & (r <= grid.extent / 4)
    vals = spec.table.values[sel]
    if sel.sum() < 3 or np.any(vals <= 0):
        return TailClass("unclassified")
    logv = np.log(vals)
    _, s_pow, res_pow = _loglinear_fit(np.log1p(r[sel]), logv)
    _, s_exp, res_exp = _loglinear_fit(r[sel], logv)
    if min(res_pow, res_exp) >= TAIL_RESIDUAL_MAX:
        return TailClass("unclassified", residual=min(res_pow, res_exp))
    if res_pow <= res_exp:
        return TailClass("polynomial", alpha=-s_pow - spec.dim, residual=res_pow)
    return TailClass("exponential", rate=-s_exp, residual=res_exp)
