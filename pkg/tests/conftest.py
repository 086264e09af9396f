from __future__ import annotations

import pytest

from jumpgen.grid import make_grid
from jumpgen.kernels import KernelSpec, sample_kernel


@pytest.fixture(scope="session")
def grid40():
    return make_grid(1, 40.0, 4096)


@pytest.fixture(scope="session")
def laplace40(grid40):
    return sample_kernel(KernelSpec.laplace(1.0), grid40)
