"""Random-walk kernels: a numba backend and a vectorized numpy fallback.

Both backends draw from the same per-walk splitmix64 stream, keyed by
``(seed, walk index)``, and consume it in the same order, so they agree up to
last-ulp differences in ``log``/``cos``.  Set ``JUMPGEN_DISABLE_NUMBA=1`` to
force the numpy path; ``JUMPGEN_THREADS`` caps numba threads (0 = auto).

Per-walk draw order: one uniform for ``K`` (skipped when ``n_fixed > 0``),
then per step the family's fixed number of uniforms (see ``DRAWS``).
"""

from __future__ import annotations

import math
import os
import warnings

import numpy as np

LAPLACE, GAUSSIAN, POLYNOMIAL, TABULATED = 0, 1, 2, 3

# uniforms per step, keyed by (family, dim)
DRAWS = {
    (LAPLACE, 1): 1, (LAPLACE, 2): 3,
    (GAUSSIAN, 1): 2, (GAUSSIAN, 2): 2,
    (POLYNOMIAL, 1): 1, (POLYNOMIAL, 2): 2,
    (TABULATED, 1): 2, (TABULATED, 2): 2,
}

GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
STREAM_SALT = 0x632BE59BD9B4E019
TWO_PI = 2.0 * math.pi
INV_2_53 = 1.0 / 9007199254740992.0


def _env_flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


def use_numba() -> bool:
    return numba is not None and not _env_flag("JUMPGEN_DISABLE_NUMBA")


def _thread_cap() -> int:
    raw = os.environ.get("JUMPGEN_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError("JUMPGEN_THREADS must be >= 0")
    return n


def poly2_radius_scalar(u: float, alpha: float) -> float:
    """Radius of the d=2 polynomial law: solve S(1+r) = u.

    With ``t = 1/(1+r)`` the survival is ``(1+alpha) t^alpha - alpha t^(1+alpha)``,
    increasing on [0, 1]; safeguarded Newton on that bracket.
    """
    lo, hi = 0.0, 1.0
    t = u ** (1.0 / alpha)
    for _ in range(100):
        ta = t**alpha
        s = (1.0 + alpha) * ta - alpha * ta * t - u
        if s > 0:
            hi = t
        else:
            lo = t
        ds = alpha * (1.0 + alpha) * (ta / t - ta) if t > 0 else 0.0
        nt = t - s / ds if ds > 0 else 0.5 * (lo + hi)
        if not (lo < nt < hi):
            nt = 0.5 * (lo + hi)
        if abs(nt - t) <= 1e-15 * max(t, 1e-300):
            t = nt
            break
        t = nt
    return 1.0 / t - 1.0


# ------------------------------------------------------------ numba backend

_U_GOLDEN, _U_MIX1, _U_MIX2, _U_SALT = (np.uint64(v) for v in (GOLDEN, MIX1, MIX2, STREAM_SALT))
_U30, _U27, _U31, _U11 = (np.uint64(v) for v in (30, 27, 31, 11))

try:
    import numba
    from numba import njit, prange
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

if numba is not None:

    @njit(inline="always")
    def _mix_nb(z):
        z = (z ^ (z >> _U30)) * _U_MIX1
        z = (z ^ (z >> _U27)) * _U_MIX2
        return z ^ (z >> _U31)

    @njit(inline="always")
    def _uniform_nb(state):
        state = state + _U_GOLDEN
        return state, ((_mix_nb(state) >> _U11) + 0.5) * INV_2_53

    _poly2_radius_nb = njit(cache=True)(poly2_radius_scalar)

    @njit(parallel=True, cache=True)
    def _walks_nb(seed, start, count, family, dim, param, n_fixed, log1p_lam,
                  alias_prob, alias_idx, table_n, table_h, out_x, out_k):
        half_n = table_n // 2
        m = alias_prob.shape[0]
        for w in prange(count):
            state = _mix_nb(seed ^ _mix_nb(np.uint64(start + w) + _U_SALT))
            if n_fixed > 0:
                k = n_fixed
            else:
                state, u = _uniform_nb(state)
                k = 1 + int(math.floor(-math.log(u) / log1p_lam))
            out_k[w] = k
            x0 = 0.0
            x1 = 0.0
            for _ in range(k):
                if family == 0:
                    if dim == 1:
                        state, u = _uniform_nb(state)
                        if u < 0.5:
                            x0 += math.log(2.0 * u) / param
                        else:
                            x0 -= math.log(2.0 * (1.0 - u)) / param
                    else:
                        state, u1 = _uniform_nb(state)
                        state, u2 = _uniform_nb(state)
                        state, u3 = _uniform_nb(state)
                        r = -(math.log(u1) + math.log(u2)) / param
                        x0 += r * math.cos(TWO_PI * u3)
                        x1 += r * math.sin(TWO_PI * u3)
                elif family == 1:
                    state, u1 = _uniform_nb(state)
                    state, u2 = _uniform_nb(state)
                    r = param * math.sqrt(-2.0 * math.log(u1))
                    x0 += r * math.cos(TWO_PI * u2)
                    if dim == 2:
                        x1 += r * math.sin(TWO_PI * u2)
                elif family == 2:
                    if dim == 1:
                        state, u = _uniform_nb(state)
                        if u < 0.5:
                            x0 -= (2.0 * u) ** (-1.0 / param) - 1.0
                        else:
                            x0 += (2.0 * (1.0 - u)) ** (-1.0 / param) - 1.0
                    else:
                        state, u1 = _uniform_nb(state)
                        state, u2 = _uniform_nb(state)
                        r = _poly2_radius_nb(u1, param)
                        x0 += r * math.cos(TWO_PI * u2)
                        x1 += r * math.sin(TWO_PI * u2)
                else:
                    state, u1 = _uniform_nb(state)
                    state, u2 = _uniform_nb(state)
                    i = min(int(u1 * m), m - 1)
                    if u2 >= alias_prob[i]:
                        i = alias_idx[i]
                    if dim == 1:
                        x0 += (i - half_n) * table_h
                    else:
                        x0 += (i // table_n - half_n) * table_h
                        x1 += (i % table_n - half_n) * table_h
            out_x[w, 0] = x0
            if dim == 2:
                out_x[w, 1] = x1


def _set_threads() -> None:
    cap = _thread_cap()
    top = numba.config.NUMBA_NUM_THREADS
    numba.set_num_threads(min(cap, top) if cap else top)


# ------------------------------------------------------------ numpy backend

_G = np.uint64(GOLDEN)
_M1, _M2, _SALT = np.uint64(MIX1), np.uint64(MIX2), np.uint64(STREAM_SALT)


def _mix_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _uniform_np(state: np.ndarray) -> np.ndarray:
    state += _G
    return ((_mix_np(state) >> np.uint64(11)).astype(np.float64) + 0.5) * INV_2_53


def _walks_numpy(seed, start, count, family, dim, param, n_fixed, log1p_lam,
                 alias_prob, alias_idx, table_n, table_h):
    with np.errstate(over="ignore"):
        idx = np.arange(start, start + count, dtype=np.uint64)
        state = _mix_np(np.uint64(seed) ^ _mix_np(idx + _SALT))
        if n_fixed > 0:
            k = np.full(count, n_fixed, dtype=np.int64)
        else:
            u = _uniform_np(state)
            k = 1 + np.floor(-np.log(u) / log1p_lam).astype(np.int64)
        x = np.zeros((count, dim))
        half_n = table_n // 2
        # Streams are private per walk, so advancing only the live ones keeps
        # each walk's draw sequence identical to the scalar loop.
        live = np.arange(count)
        step = 0
        while live.size:
            st = state[live]
            if family == LAPLACE:
                if dim == 1:
                    u = _uniform_np(st)
                    lo = u < 0.5
                    inc = np.where(lo, np.log(2.0 * np.where(lo, u, 0.25)),
                                   -np.log(2.0 * (1.0 - np.where(lo, 0.75, u)))) / param
                    x[live, 0] += inc
                else:
                    u1, u2, u3 = _uniform_np(st), _uniform_np(st), _uniform_np(st)
                    r = -(np.log(u1) + np.log(u2)) / param
                    x[live, 0] += r * np.cos(TWO_PI * u3)
                    x[live, 1] += r * np.sin(TWO_PI * u3)
            elif family == GAUSSIAN:
                u1, u2 = _uniform_np(st), _uniform_np(st)
                r = param * np.sqrt(-2.0 * np.log(u1))
                x[live, 0] += r * np.cos(TWO_PI * u2)
                if dim == 2:
                    x[live, 1] += r * np.sin(TWO_PI * u2)
            elif family == POLYNOMIAL:
                if dim == 1:
                    u = _uniform_np(st)
                    lo = u < 0.5
                    w = np.where(lo, 2.0 * u, 2.0 * (1.0 - u))
                    mag = w ** (-1.0 / param) - 1.0
                    x[live, 0] += np.where(lo, -mag, mag)
                else:
                    u1, u2 = _uniform_np(st), _uniform_np(st)
                    r = np.array([poly2_radius_scalar(v, param) for v in u1])
                    x[live, 0] += r * np.cos(TWO_PI * u2)
                    x[live, 1] += r * np.sin(TWO_PI * u2)
            else:
                u1, u2 = _uniform_np(st), _uniform_np(st)
                m = alias_prob.shape[0]
                i = np.minimum((u1 * m).astype(np.int64), m - 1)
                i = np.where(u2 >= alias_prob[i], alias_idx[i], i)
                if dim == 1:
                    x[live, 0] += (i - half_n) * table_h
                else:
                    x[live, 0] += (i // table_n - half_n) * table_h
                    x[live, 1] += (i % table_n - half_n) * table_h
            state[live] = st
            step += 1
            live = live[k[live] > step]
    return x, k


# ------------------------------------------------------------------ driver


def run_walks(seed: int, start: int, count: int, family: int, dim: int, param: float,
              *, n_fixed: int = 0, lam: float = 1.0, alias=None, table_n: int = 0,
              table_h: float = 0.0, backend: str | None = None):
    """Endpoints ``(count, dim)`` and step counts for walks ``start .. start+count-1``."""
    if backend is None:
        backend = "numba" if use_numba() else "numpy"
    log1p_lam = math.log1p(lam)
    if alias is None:
        alias_prob, alias_idx = np.ones(1), np.zeros(1, dtype=np.int64)
    else:
        alias_prob, alias_idx = alias
    args = (int(seed), int(start), int(count), int(family), int(dim), float(param),
            int(n_fixed), log1p_lam, alias_prob, alias_idx, int(table_n), float(table_h))
    if backend == "numba":
        if numba is None:
            raise RuntimeError("numba backend requested but numba is not installed")
        out_x = np.zeros((count, dim))
        out_k = np.zeros(count, dtype=np.int64)
        with warnings.catch_warnings():
            # the threading-layer probe complains about old TBB builds, then falls back
            warnings.filterwarnings("ignore", message=".*TBB.*")
            _set_threads()
            _walks_nb(np.uint64(seed), *args[1:], out_x, out_k)
        return out_x, out_k
    if backend == "numpy":
        return _walks_numpy(*args)
    raise ValueError(f"unknown backend {backend!r}")


def build_alias(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose alias tables for sampling index ``i`` with probability ``weights[i]``."""
    p = np.asarray(weights, dtype=float)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or not p.sum() > 0:
        raise ValueError("weights must be a nonempty nonnegative vector with positive sum")
    n = p.size
    scaled = p * (n / p.sum())
    prob = np.ones(n)
    alias = np.arange(n, dtype=np.int64)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s, g = small.pop(), large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] -= 1.0 - scaled[s]
        (small if scaled[g] < 1.0 else large).append(g)
    return prob, alias
