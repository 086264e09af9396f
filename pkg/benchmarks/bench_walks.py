"""Walk-kernel benchmark: numba vs the numpy fallback.

Both backends run the same walks (same seed, same walk indices); the script
reports wall time per million steps and whether the endpoint histograms agree.

    python benchmarks/bench_walks.py --walks 200000 --lam 0.5
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from jumpgen import _walks
from jumpgen.grid import make_grid
from jumpgen.kernels import KernelSpec
from jumpgen.mc_oracle import _cell_index, _walk_params

# (label, spec, fixed step count; 0 means geometric stopping)
CASES = [
    ("laplace d=1", KernelSpec.laplace(1.0), 0),
    ("gaussian d=1", KernelSpec.gaussian(1.0), 0),
    ("polynomial d=1", KernelSpec.polynomial(1.0), 0),
    ("laplace d=2", KernelSpec.laplace(1.0, dim=2), 0),
    ("laplace n=100", KernelSpec.laplace(1.0), 100),
]


def timed(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--walks", type=int, default=200_000)
    ap.add_argument("--lam", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    if not _walks.use_numba():
        print("numba unavailable or disabled (JUMPGEN_DISABLE_NUMBA); nothing to compare")
        return

    print(f"{'case':<16} {'numba s':>9} {'numpy s':>9} {'speedup':>8} {'Msteps':>7}  histograms")
    for label, spec, n_fixed in CASES:
        grid = make_grid(spec.dim, 40.0, 256 if spec.dim == 2 else 4096)
        params = _walk_params(spec)

        def go(backend):
            count = args.walks // 20 if n_fixed else args.walks
            return _walks.run_walks(args.seed, 0, count, dim=spec.dim, lam=args.lam, n_fixed=n_fixed,
                                    backend=backend, **params)

        go("numba")  # compile outside the timing
        t_nb, (x_nb, k_nb) = timed(lambda: go("numba"), args.repeat)
        t_np, (x_np, k_np) = timed(lambda: go("numpy"), args.repeat)
        steps = k_nb.sum() / 1e6
        h_nb = np.bincount(_cell_index(x_nb, grid) + 1, minlength=grid.size + 1)
        h_np = np.bincount(_cell_index(x_np, grid) + 1, minlength=grid.size + 1)
        moved = int(np.abs(h_nb - h_np).sum()) // 2
        same = "identical" if moved == 0 else f"{moved} walks in different cells"
        assert np.array_equal(k_nb, k_np), "step counts differ between backends"
        print(f"{label:<16} {t_nb:9.3f} {t_np:9.3f} {t_np / t_nb:8.1f} {steps:7.2f}  {same}")


if __name__ == "__main__":
    main()
