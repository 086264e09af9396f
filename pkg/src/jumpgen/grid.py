"""Periodic uniform grids in one and two dimensions.

Nodes sit at ``x_j = -L/2 + j*h`` for ``j = 0..N-1`` on every axis and are
stored row-major.  Spectral samples are kept in standard FFT order, with the
frequency of index ``k`` given by :meth:`Grid.frequencies`.  The forward
transform carries the quadrature weight ``h**d`` so that transforming a
sampled density approximates its continuum Fourier transform.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GridMismatchError


@dataclass(frozen=True)
class Grid:
    dim: int
    extent: float
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not self.extent > 0:
            raise ValueError(f"extent must be positive, got {self.extent}")
        n = self.points_per_axis
        if int(n) != n or n < 8 or n % 2:
            raise ValueError(f"points_per_axis must be an even integer >= 8, got {n}")
        object.__setattr__(self, "extent", float(self.extent))
        object.__setattr__(self, "points_per_axis", int(n))

    @property
    def spacing(self) -> float:
        return self.extent / self.points_per_axis

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def axis(self) -> np.ndarray:
        # (j - N/2)*h keeps x -> -x exact on the lattice
        n = self.points_per_axis
        return (np.arange(n) - n // 2) * self.spacing

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape ``(N**d, d)``, row-major."""
        ax = self.axis()
        if self.dim == 1:
            return ax[:, None]
        x1, x2 = np.meshgrid(ax, ax, indexing="ij")
        return np.column_stack([x1.ravel(), x2.ravel()])

    def radius(self) -> np.ndarray:
        """``|x_j|`` for every node, flat."""
        ax = self.axis()
        if self.dim == 1:
            return np.abs(ax)
        x1, x2 = np.meshgrid(ax, ax, indexing="ij")
        return np.hypot(x1, x2).ravel()

    def frequencies(self) -> np.ndarray:
        """Per-axis dual frequencies ``2*pi*k/L`` in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.points_per_axis, d=self.spacing)

    def frequency_modulus(self) -> np.ndarray:
        """``|p_k|`` on the flat dual grid."""
        p = self.frequencies()
        if self.dim == 1:
            return np.abs(p)
        p1, p2 = np.meshgrid(p, p, indexing="ij")
        return np.hypot(p1, p2).ravel()

    def mirror_index(self) -> np.ndarray:
        """Flat index of the node at ``-x_j`` (periodic)."""
        n = self.points_per_axis
        m = (n - np.arange(n)) % n
        if self.dim == 1:
            return m
        return (m[:, None] * n + m[None, :]).ravel()

    def dual_mirror_index(self) -> np.ndarray:
        """Flat index of the frequency ``-p_k`` in FFT order."""
        n = self.points_per_axis
        m = (-np.arange(n)) % n
        if self.dim == 1:
            return m
        return (m[:, None] * n + m[None, :]).ravel()

    def constant(self, value: float) -> Field:
        return Field(self, np.full(self.size, float(value)))

    def sample(self, func) -> Field:
        """Evaluate ``func(r)`` at node radii."""
        return Field(self, np.asarray(func(self.radius()), dtype=float))


def make_grid(dim: int, extent: float, points_per_axis: int) -> Grid:
    return Grid(dim, extent, points_per_axis)


def _frozen(values: np.ndarray, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True).ravel()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Field:
    """Real samples of a function at the nodes of ``grid``."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = _frozen(self.values, float)
        if vals.size != self.grid.size:
            raise ValueError(f"field has {vals.size} values, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)

    def reshaped(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def with_values(self, values) -> Field:
        return Field(self.grid, values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex samples on the dual grid, FFT order."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = _frozen(self.values, complex)
        if vals.size != self.grid.size:
            raise ValueError(f"spectral field has {vals.size} values, grid has {self.grid.size}")
        object.__setattr__(self, "values", vals)

    def is_conjugate_symmetric(self, rtol: float = 1e-12) -> bool:
        mirrored = np.conj(self.values[self.grid.dual_mirror_index()])
        scale = max(float(np.max(np.abs(self.values))), np.finfo(float).tiny)
        return bool(np.max(np.abs(self.values - mirrored)) <= rtol * scale)


def check_same_grid(*fields) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(f"grid mismatch: {f.grid} vs {grid}")
    return grid


def integrate(f: Field) -> float:
    """Rectangle rule on the torus."""
    return float(f.grid.cell_volume * np.sum(f.values))


def transform(f: Field) -> SpectralField:
    g = f.grid
    data = np.fft.fftn(np.fft.ifftshift(f.reshaped())) * g.cell_volume
    return SpectralField(g, data)


def inverse_transform(F: SpectralField) -> Field:
    g = F.grid
    data = np.fft.ifftn(F.values.reshape(g.shape)) / g.cell_volume
    return Field(g, np.fft.fftshift(data).real)


def write_field_csv(f: Field, path: str | Path) -> None:
    """One row per node: ``x1[,x2],value`` with 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    coords = f.grid.coordinates()
    header = ["x1", "value"] if f.grid.dim == 1 else ["x1", "x2", "value"]
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row, v in zip(coords, f.values):
            writer.writerow([f"{c:.17g}" for c in row] + [f"{v:.17g}"])


def read_field_csv(path: str | Path, grid: Grid | None = None) -> Field:
    """Read a field CSV; the grid is inferred unless given."""
    data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    dim = data.shape[1] - 1
    if dim not in (1, 2):
        raise ValueError(f"{path}: expected 2 or 3 columns, got {data.shape[1]}")
    n = int(round(data.shape[0] ** (1.0 / dim)))
    if n**dim != data.shape[0]:
        raise ValueError(f"{path}: {data.shape[0]} rows is not N**{dim}")
    if grid is None:
        ax = data[:n, 0] if dim == 1 else data[::n, 0]
        h = (ax[-1] - ax[0]) / (n - 1)
        grid = Grid(dim, float(f"{h * n:.12g}"), n)
    if grid.dim != dim or grid.size != data.shape[0]:
        raise GridMismatchError(f"{path}: does not match {grid}")
    if not np.allclose(data[:, :dim], grid.coordinates(), rtol=0, atol=1e-9 * grid.extent):
        raise GridMismatchError(f"{path}: node coordinates do not match {grid}")
    return Field(grid, data[:, -1])
