from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jumpgen.errors import GridMismatchError, KernelResolutionError, MGFUnreliableError
from jumpgen.grid import Field, integrate, make_grid, transform, write_field_csv
from jumpgen.kernels import KernelSpec, mgf, sample_kernel, symbol, tail_class

trapezoid = getattr(np, "trapezoid", None) or np.trapz

SPECS_1D = [KernelSpec.laplace(1.0), KernelSpec.laplace(2.5), KernelSpec.gaussian(1.0),
            KernelSpec.gaussian(0.4), KernelSpec.polynomial(1.0), KernelSpec.polynomial(2.0)]
SPECS_2D = [KernelSpec.laplace(1.0, 2), KernelSpec.gaussian(1.0, 2), KernelSpec.polynomial(2.0, 2)]


def _grid_for(spec):
    if spec.dim == 1:
        return make_grid(1, 400.0 if spec.family == "polynomial" else 40.0, 8192)
    return make_grid(2, 200.0 if spec.family == "polynomial" else 30.0, 512)


@pytest.mark.parametrize("spec", SPECS_1D + SPECS_2D, ids=lambda s: f"{s.family}-d{s.dim}")
def test_sampled_kernel_invariants(spec):
    grid = _grid_for(spec)
    a, scale = sample_kernel(spec, grid, return_scale=True)
    assert abs(integrate(a) - 1.0) < 1e-13
    assert 0.9 <= scale <= 1.1
    assert a.values.min() >= 0
    np.testing.assert_array_equal(a.values, a.values[grid.mirror_index()])
    s = symbol(spec, grid).values
    assert abs(s[0] - 1.0) < 1e-12
    assert np.max(np.abs(s)) <= 1 + 1e-12
    assert np.max(np.abs(transform(a).values.imag)) <= 1e-12


def test_laplace_unit_mass_on_reference_grid(grid40):
    assert abs(integrate(sample_kernel(KernelSpec.laplace(1.0), grid40)) - 1.0) < 1e-14


@pytest.mark.parametrize("spec", SPECS_1D + SPECS_2D, ids=lambda s: f"{s.family}-d{s.dim}")
def test_continuum_normalization(spec):
    # radial quadrature in t = log(1+r), independent of the grid code
    R = 1e5 if spec.family == "polynomial" else 200.0
    t = np.linspace(0.0, np.log1p(R), 2_000_001)
    r = np.expm1(t)
    shell = 2.0 if spec.dim == 1 else 2 * np.pi * r
    mass = trapezoid(spec.density(r) * shell * np.exp(t), t)
    tail = 0.0
    if spec.family == "polynomial":
        # closed-form tail beyond the cut-off
        a, R = spec.alpha, r[-1]
        tail = (1 + R) ** -a if spec.dim == 1 else (1 + a) * (1 + R) ** -a - a * (1 + R) ** -(1 + a)
    assert abs(mass + tail - 1.0) < 1e-6


def test_polynomial_density_value():
    spec = KernelSpec.polynomial(1.0)
    assert spec.density(0.0) == 0.5
    assert abs(spec.density(3.0) - 0.5 / 16) < 1e-15


def test_rescaling_guard():
    # sigma=1 on L=4 keeps ~95% of the mass: factor ~1.05 is inside the guard
    _, scale = sample_kernel(KernelSpec.gaussian(1.0), make_grid(1, 4.0, 8), return_scale=True)
    assert abs(scale - 1.0526091191) < 1e-9
    with pytest.raises(KernelResolutionError):
        sample_kernel(KernelSpec.gaussian(1.0), make_grid(1, 2.0, 8))
    with pytest.raises(KernelResolutionError):
        sample_kernel(KernelSpec.laplace(1.0), make_grid(1, 40.0, 8))


def test_dim_mismatch():
    with pytest.raises(GridMismatchError):
        sample_kernel(KernelSpec.laplace(1.0, 2), make_grid(1, 10.0, 64))


@pytest.mark.parametrize("kw", [dict(family="laplace"), dict(family="laplace", delta=-1.0),
                                dict(family="cauchy", delta=1.0), dict(family="gaussian", sigma=1.0, dim=3)])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        KernelSpec(**kw)


def test_symbol_closed_forms(grid40):
    p = grid40.frequencies()
    lap = symbol(KernelSpec.laplace(1.0), grid40).values.real
    np.testing.assert_allclose(lap, 1 / (1 + p**2), rtol=0, atol=1e-15)
    # the sampled kernel transform tracks the closed form
    fft = transform(sample_kernel(KernelSpec.laplace(1.0), grid40)).values.real
    assert np.max(np.abs(fft - lap)) < 1e-4
    gau = symbol(KernelSpec.gaussian(1.0), grid40).values.real
    fftg = transform(sample_kernel(KernelSpec.gaussian(1.0), grid40)).values.real
    assert np.max(np.abs(fftg - gau)) < 1e-10


def test_symbol_laplace_2d_matches_sample():
    grid = make_grid(2, 60.0, 512)
    spec = KernelSpec.laplace(1.0, 2)
    closed = symbol(spec, grid).values.real
    sampled = transform(sample_kernel(spec, grid)).values.real
    assert np.max(np.abs(closed - sampled)) < 5e-3


def test_mgf_examples():
    lap = KernelSpec.laplace(1.0)
    assert mgf(lap, 0.0) == 1.0
    assert abs(mgf(lap, 0.5) - 4 / 3) < 1e-15
    assert mgf(lap, 1.0) == math.inf
    assert mgf(KernelSpec.polynomial(1.0), 0.1) == math.inf
    assert mgf(KernelSpec.polynomial(1.0), 0.0) == 1.0
    assert abs(mgf(KernelSpec.gaussian(2.0), 0.3) - math.exp(0.18)) < 1e-15
    with pytest.raises(ValueError):
        mgf(KernelSpec.laplace(1.0, 2), 0.1)
    with pytest.raises(ValueError):
        mgf(lap, -0.1)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.0, 0.999))
def test_mgf_monotone_and_blows_up(delta, frac):
    spec = KernelSpec.laplace(delta)
    q = frac * delta
    assert mgf(spec, q) <= mgf(spec, min(q * 1.001 + 1e-9, delta * 0.9999))
    assert mgf(spec, delta * (1 - 1e-9)) > 1e8


def test_mgf_tabulated_matches_closed_form(grid40):
    table = sample_kernel(KernelSpec.laplace(2.0), grid40)
    tab = KernelSpec.tabulated(table)
    assert abs(mgf(tab, 0.5) - 4 / 3.75) < 1e-4
    with pytest.raises(MGFUnreliableError):
        mgf(tab, 1.99)


def test_tail_classes():
    assert tail_class(KernelSpec.laplace(2.0)).kind == "exponential"
    assert tail_class(KernelSpec.laplace(2.0)).rate == 2.0
    tc = tail_class(KernelSpec.polynomial(1.5))
    assert tc.kind == "polynomial" and tc.alpha == 1.5
    assert tail_class(KernelSpec.gaussian(1.0)).kind == "super_exponential"


def test_tabulated_classification():
    grid = make_grid(1, 400.0, 8192)
    poly = KernelSpec.tabulated(grid.sample(lambda r: 0.5 * (1 + r) ** -2.0))
    tc = tail_class(poly)
    assert tc.kind == "polynomial" and abs(tc.alpha - 1.0) < 0.1
    g40 = make_grid(1, 40.0, 4096)
    expo = KernelSpec.tabulated(g40.sample(lambda r: 0.5 * np.exp(-r)))
    tc = tail_class(expo)
    assert tc.kind == "exponential" and abs(tc.rate - 1.0) < 1e-6
    # a compact bump has zeros in the window: no classification
    bump = KernelSpec.tabulated(g40.sample(lambda r: np.where(r < 2, 1.0, 0.0)))
    assert tail_class(bump).kind == "unclassified"


def test_tabulated_validation():
    g = make_grid(1, 10.0, 16)
    vals = np.exp(-np.abs(g.axis()))
    vals[3] += 0.1
    with pytest.raises(ValueError, match="even"):
        KernelSpec.tabulated(Field(g, vals))
    with pytest.raises(ValueError, match="nonnegative"):
        KernelSpec.tabulated(Field(g, -np.exp(-np.abs(g.axis()))))


def test_json_round_trip(tmp_path):
    for spec in SPECS_1D + SPECS_2D:
        back = KernelSpec.from_json(spec.to_json())
        assert back.to_dict() == spec.to_dict()
    assert KernelSpec.laplace(1.0).to_dict() == {"family": "laplace", "delta": 1.0, "dim": 1}
    g = make_grid(1, 40.0, 256)
    write_field_csv(g.sample(lambda r: 0.5 * np.exp(-r)), tmp_path / "k.csv")
    tab = KernelSpec.from_dict({"family": "tabulated", "file": "k.csv"}, base_dir=tmp_path)
    assert tab.to_dict() == {"family": "tabulated", "dim": 1, "file": "k.csv"}
    assert abs(integrate(sample_kernel(tab, g)) - 1.0) < 1e-13
