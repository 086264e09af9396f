from __future__ import annotations

import json

import numpy as np
import pytest

from jumpgen.errors import ConvergenceError, GridMismatchError
from jumpgen.grid import Field, make_grid
from jumpgen.kernels import KernelSpec, sample_kernel
from jumpgen.schrodinger import (
    GroundState,
    Potential,
    groundstate_residual,
    groundstate_tail_report,
    principal_eigenpair,
    rayleigh_quotient,
)

from oracles import dense_operator, dense_principal_eigenvalue, laplace_root

GS_GRID = make_grid(1, 40.0, 512)


@pytest.fixture(scope="module")
def lap():
    return sample_kernel(KernelSpec.laplace(1.0), GS_GRID)


@pytest.fixture(scope="module")
def box_gs(lap):
    return principal_eigenpair(lap, Potential.box(1.0, 1.0), 1e-12, keep_history=True)


def test_potential_validation():
    for args in [(1.5, 1.0), (0.0, 1.0), (1.0, 0.0)]:
        with pytest.raises(ValueError):
            Potential.box(*args)
    g = make_grid(1, 10.0, 64)
    with pytest.raises(ValueError):
        Potential(1.0, "tabulated", table=Field(g, np.full(64, 0.5)))  # not compactly supported
    with pytest.raises(ValueError):
        Potential(5.0, "tabulated", table=Field(g, np.full(64, 1.5)))
    with pytest.raises(ValueError):
        Potential(1.0, "wedge")


def test_zero_potential_hits_edge(lap):
    zero = Field(GS_GRID, np.zeros(GS_GRID.size))
    gs = principal_eigenpair(lap, zero, 1e-10)
    assert gs.edge_detected
    with pytest.raises(ValueError):
        groundstate_residual(lap, zero, gs)
    with pytest.raises(ValueError):
        groundstate_tail_report(gs, KernelSpec.laplace(1.0))


def test_box_matches_dense_oracle(lap, box_gs):
    v = Potential.box(1.0, 1.0).realize(GS_GRID).values
    ref = dense_principal_eigenvalue(lap.values, v, GS_GRID.spacing)
    assert not box_gs.edge_detected and box_gs.lam > 0
    assert abs(box_gs.lam - ref) <= 1e-6
    assert box_gs.residual <= 1e-8


def test_weak_potential_still_binds(lap):
    # d = 1 with finite second moment: any V != 0 produces an eigenvalue above the edge
    V = Potential.box(0.3, 0.5)
    gs = principal_eigenpair(lap, V, 1e-13)
    ref = dense_principal_eigenvalue(lap.values, V.realize(GS_GRID).values, GS_GRID.spacing)
    assert ref > 0
    assert abs(gs.lam - ref) <= 1e-6


def test_eigenvector_matches_dense(lap, box_gs):
    v = Potential.box(1.0, 1.0).realize(GS_GRID).values
    w, U = np.linalg.eigh(dense_operator(lap.values, v, GS_GRID.spacing))
    top = np.abs(U[:, -1])
    np.testing.assert_allclose(box_gs.psi.values, top / top.max(), atol=1e-6)


def test_representation_residual(lap, box_gs):
    V = Potential.box(1.0, 1.0)
    assert groundstate_residual(lap, V, box_gs) <= 1e-6
    rng = np.random.default_rng(1)
    noisy = box_gs.psi.values * (1 + 0.01 * rng.standard_normal(GS_GRID.size))
    bad = GroundState(box_gs.lam, Field(GS_GRID, noisy), 0, 0.0, False)
    assert groundstate_residual(lap, V, bad) > 1e-3


def test_rayleigh_monotone_and_positive(box_gs):
    hist = np.array(box_gs.rayleigh_history)
    assert np.all(np.diff(hist) >= -1e-14)
    assert box_gs.psi.values.min() > 0
    assert box_gs.psi.values.max() == 1.0


def test_variational_bound(lap, box_gs):
    V = Potential.box(1.0, 1.0)
    rng = np.random.default_rng(5)
    trials = [np.abs(rng.standard_normal(GS_GRID.size)) for _ in range(5)]
    trials += [np.exp(-np.abs(GS_GRID.axis())), V.realize(GS_GRID).values + 1e-3]
    top = box_gs.lam + 1
    for t in trials:
        assert rayleigh_quotient(lap, V, Field(GS_GRID, t)) <= top + 1e-12
    assert abs(rayleigh_quotient(lap, V, box_gs.psi) - top) < 1e-12


def test_start_scaling_invariance(lap):
    V = Potential.box(1.0, 1.0)
    start = V.realize(GS_GRID)
    g1 = principal_eigenpair(lap, V, 1e-12, start=start)
    g2 = principal_eigenpair(lap, V, 1e-12, start=Field(GS_GRID, 37.5 * start.values))
    assert abs(g1.lam - g2.lam) <= 1e-12
    assert np.max(np.abs(g1.psi.values - g2.psi.values)) <= 1e-12


def test_tabulated_potential(lap):
    x = GS_GRID.axis()
    table = Field(GS_GRID, np.where(np.abs(x) <= 1.5, 0.8 * (1 - (x / 1.5) ** 2), 0.0))
    V = Potential(1.5, "tabulated", table=table)
    gs = principal_eigenpair(lap, V, 1e-12)
    ref = dense_principal_eigenvalue(lap.values, table.values, GS_GRID.spacing)
    assert abs(gs.lam - ref) <= 1e-6
    with pytest.raises(GridMismatchError):
        V.realize(make_grid(1, 40.0, 256))


def test_iteration_cap(lap):
    with pytest.raises(ConvergenceError):
        principal_eigenpair(lap, Potential.box(1.0, 1.0), 1e-12, max_iter=3)
    with pytest.raises(ValueError):
        principal_eigenpair(lap, Potential.box(1.0, 1.0), 0.0)


def test_laplace_psi_rate(box_gs):
    rep = groundstate_tail_report(box_gs, KernelSpec.laplace(1.0), support_radius=1.0)
    q = laplace_root(box_gs.lam)
    assert abs(rep.exponent - q) / q <= 0.03
    assert rep.passed and rep.in_scope


def test_gaussian_out_of_scope():
    grid = make_grid(1, 40.0, 512)
    spec = KernelSpec.gaussian(1.0)
    gs = principal_eigenpair(sample_kernel(spec, grid), Potential.box(1.0, 1.0), 1e-12)
    rep = groundstate_tail_report(gs, spec, (3, 8))
    assert not rep.in_scope and "outside" in rep.note


def test_polynomial_psi_exponent():
    grid = make_grid(1, 400.0, 2**15)
    spec = KernelSpec.polynomial(1.0)
    gs = principal_eigenpair(sample_kernel(spec, grid), Potential.box(1.0, 1.0), 1e-10)
    rep = groundstate_tail_report(gs, spec, (50, 100))
    assert abs(rep.exponent - 2.0) <= 0.15 and rep.passed


def test_sidecar(box_gs):
    side = json.loads(json.dumps(box_gs.sidecar()))
    assert set(side) == {"lambda", "iterations", "residual", "edge_detected"}
    assert side["edge_detected"] is False
