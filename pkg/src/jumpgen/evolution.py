"""Sourced nonlocal heat equation ``u_t = L0 u - m u + f`` with ``u(., 0) = 0``.

Every Fourier mode obeys the scalar ODE ``v' = -(1 + m - a_hat) v + f_hat``,
whose rate is at least ``m > 0``.  :func:`evolve_exact` integrates it in
closed form and :func:`evolve_stepped` runs classical RK4 on the semidiscrete
system in physical space; the two are kept as independent checks of each
other.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SelfCheckError
from .grid import Field, Grid, SpectralField, check_same_grid, inverse_transform, transform, write_field_csv
from .reports import Check, Report, check_upper
from .resolvent import apply_symbol, convolve, resolvent_kernel_spectral

STATIONARY_AGREEMENT = 1e-9
STABILITY_MARGIN = 0.5
ORDER_TOL = 1e-9


def _rate(a: Field, m: float) -> np.ndarray:
    return 1.0 + m - transform(a).values


def stationary_solution(a: Field, m: float, f: Field) -> Field:
    """``(m - L0)^{-1} f``, cross-checked against ``(f + G_m * f)/(1+m)``."""
    if not m > 0:
        raise ValueError(f"m must be positive, got {m}")
    check_same_grid(a, f)
    spectral = inverse_transform(SpectralField(f.grid, transform(f).values / _rate(a, m)))
    G = resolvent_kernel_spectral(a, m).g
    via_kernel = (f.values + convolve(G, f).values) / (1.0 + m)
    gap = float(np.max(np.abs(spectral.values - via_kernel)))
    if gap > STATIONARY_AGREEMENT:
        raise SelfCheckError(f"stationary solution: formulations differ by {gap:.3e}")
    return spectral


def evolve_exact(a: Field, m: float, f: Field, t: float) -> Field:
    if not m > 0:
        raise ValueError(f"m must be positive, got {m}")
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    check_same_grid(a, f)
    rate = _rate(a, m)
    factor = -np.expm1(-rate * t) / rate
    return inverse_transform(SpectralField(f.grid, transform(f).values * factor))


def geometric_times(t_end: float, levels: int = 8) -> list[float]:
    """``0`` and ``t_end * 2**-k`` for ``k < levels``, ascending."""
    return [0.0] + [t_end * 2.0 ** (-k) for k in range(levels - 1, -1, -1)]


@dataclass(frozen=True, eq=False)
class EvolutionTrace:
    times: tuple[float, ...]
    snapshots: tuple[Field, ...]
    m: float
    f: Field
    dt: float | None = None

    def __post_init__(self):
        if len(self.times) != len(self.snapshots) or not self.times:
            raise ValueError("times and snapshots must be nonempty and aligned")
        if self.times[0] != 0 or any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must start at 0 and increase")
        if np.any(self.snapshots[0].values != 0):
            raise ValueError("initial snapshot must vanish")

    @property
    def final(self) -> Field:
        return self.snapshots[-1]

    def write(self, directory: str | Path) -> None:
        """One field CSV per snapshot plus ``manifest.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        names = []
        for i, snap in enumerate(self.snapshots):
            name = f"snapshot_{i:03d}.csv"
            write_field_csv(snap, directory / name)
            names.append(name)
        manifest = {"times": list(self.times), "m": self.m, "dt": self.dt, "files": names}
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def evolve_stepped(
    a: Field, m: float, f: Field, t_end: float, dt: float, output_times=None
) -> EvolutionTrace:
    """Classical RK4; snapshots land on the step nearest each output time."""
    if not m > 0:
        raise ValueError(f"m must be positive, got {m}")
    if not dt > 0 or not t_end > 0:
        raise ValueError("dt and t_end must be positive")
    if dt * (2 + m) > STABILITY_MARGIN:
        raise ValueError(f"dt*(2+m) = {dt * (2 + m):.3g} exceeds the stability margin {STABILITY_MARGIN}")
    grid = check_same_grid(a, f)
    n_steps = math.ceil(t_end / dt - 1e-9)
    h = t_end / n_steps
    wanted = output_times if output_times is not None else geometric_times(t_end)
    marks = sorted({0, n_steps} | {min(n_steps, max(0, round(t / h))) for t in wanted})

    a_hat = transform(a).values
    shape = grid.shape
    src = f.values
    decay = 1.0 + m

    def rhs(u):
        return apply_symbol(a_hat, u, shape) - decay * u + src

    u = np.zeros(grid.size)
    times, snaps = [0.0], [Field(grid, u)]
    mark_iter = iter(marks[1:])
    next_mark = next(mark_iter, None)
    for step in range(1, n_steps + 1):
        k1 = rhs(u)
        k2 = rhs(u + 0.5 * h * k1)
        k3 = rhs(u + 0.5 * h * k2)
        k4 = rhs(u + h * k3)
        u = u + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if step == next_mark:
            times.append(step * h)
            snaps.append(Field(grid, u))
            next_mark = next(mark_iter, None)
    return EvolutionTrace(tuple(times), tuple(snaps), m, f, h)


def stepping_tolerance(m: float, dt: float, f: Field, t_end: float) -> float:
    return 10 * dt**4 * (2 + m) ** 4 * f.sup() * t_end


def comparison_report(trace: EvolutionTrace, u_hat: Field, *, envelope_slack: float = 1.01) -> Report:
    """Positivity, ordering below the stationary state, monotone growth, and the decay envelope."""
    check_same_grid(trace.f, u_hat)
    for snap in trace.snapshots:
        check_same_grid(snap, u_hat)
    report = Report("comparison_principle")
    lows, above = [], []
    for snap in trace.snapshots:
        lows.append(float(snap.values.min()))
        above.append(float(np.max(snap.values - u_hat.values)))
    report.checks.append(
        Check("bounded_by_stationary", max(-min(lows), max(above)), ORDER_TOL,
              min(lows) >= -ORDER_TOL and max(above) <= ORDER_TOL,
              note="0 <= u(x,t) <= u_hat(x) at every node and snapshot")
    )
    worst_drop = 0.0
    for prev, nxt in zip(trace.snapshots, trace.snapshots[1:]):
        worst_drop = max(worst_drop, float(np.max(prev.values - nxt.values)))
    report.checks.append(check_upper("monotone_in_time", worst_drop, ORDER_TOL))

    fsup = trace.f.sup()
    worst_ratio = 0.0
    for t, snap in zip(trace.times, trace.snapshots):
        envelope = math.exp(-trace.m * t) * fsup / trace.m
        dist = float(np.max(np.abs(snap.values - u_hat.values)))
        if envelope > 0:
            worst_ratio = max(worst_ratio, dist / envelope)
    report.checks.append(
        check_upper("decay_envelope_ratio", worst_ratio, envelope_slack,
                    note="sup|u(t) - u_hat| / (exp(-m t) sup f / m)")
    )
    report.data = {"times": list(trace.times), "m": trace.m, "min_values": lows}
    return report


def make_source(desc: dict, grid: Grid) -> Field:
    """Build a nonnegative source from a JSON description.

    ``{"kind": "box", "height": h, "radius": r}``,
    ``{"kind": "polynomial", "alpha": a1, "height": h}`` for ``h (1+|x|)^-(d+a1)``,
    ``{"kind": "constant", "value": c}`` (torus-only test input), or
    ``{"kind": "file", "path": ...}``.
    """
    kind = desc.get("kind", "box")
    r = grid.radius()
    if kind == "box":
        vals = np.where(r <= float(desc.get("radius", 1.0)), float(desc.get("height", 1.0)), 0.0)
    elif kind == "polynomial":
        vals = float(desc.get("height", 1.0)) * (1 + r) ** (-(grid.dim + float(desc["alpha"])))
    elif kind == "constant":
        vals = np.full(grid.size, float(desc["value"]))
    elif kind == "file":
        from .grid import read_field_csv

        return read_field_csv(desc["path"], grid)
    else:
        raise ValueError(f"unknown source kind {kind!r}")
    return Field(grid, vals)
