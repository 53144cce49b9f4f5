"""Reflected diffusion paths, equidistant sampling and occupation statistics.

Paths are produced by Euler-Maruyama sub-stepping of the unconstrained
equation followed by the 2-periodic tent map after every step, so the state
stays in ``[0, 1]``.  Random streams are Philox generators keyed by
``(master_seed, *indices)``; a replicate's path therefore depends only on its
key and never on how replicates are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConditioningExhausted, InvalidStep, StepMismatch
from .model import DiffusionModel, sample_stationary

DEFAULT_BINS = 50


def rng_stream(master_seed: int, *keys: int) -> np.random.Generator:
    """Counter-based generator for the stream identified by ``(master_seed, *keys)``."""
    seq = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])
    return np.random.Generator(np.random.Philox(seq))


def default_substep(delta: float) -> float:
    """``min(delta / 100, 0.001)``."""
    return min(delta / 100.0, 1e-3)


def fold(y):
    """Tent map of period 2 sending the real line onto ``[0, 1]``.

    ``y - 2n`` on ``[2n, 2n+1)`` and ``2(n+1) - y`` on ``[2n+1, 2n+2)``.
    """
    y = np.asarray(y, dtype=float)
    r = y - 2.0 * np.floor(0.5 * y)
    out = np.where(r < 1.0, r, 2.0 - r)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FinePath:
    dt_sub: float
    values: np.ndarray = field(repr=False)
    t_end: float

    @property
    def times(self) -> np.ndarray:
        return self.dt_sub * np.arange(len(self.values))


@dataclass(frozen=True)
class Sample:
    """Equidistant observations ``X_0, X_delta, ..., X_{N delta}``."""

    delta: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("sample values must be one-dimensional")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return len(self.values) - 1

    @property
    def T(self) -> float:
        return self.n * self.delta

    @property
    def times(self) -> np.ndarray:
        return self.delta * np.arange(len(self.values))

    def sorted_order(self) -> np.ndarray:
        """Stable argsort of the values, computed once per sample."""
        order = self.__dict__.get("_order")
        if order is None:
            order = np.argsort(self.values, kind="stable")
            object.__setattr__(self, "_order", order)
        return order

    def reversed(self) -> "Sample":
        """Time reversal ``Y_t = X_{T-t}`` on the same grid."""
        return Sample(self.delta, self.values[::-1].copy())


@dataclass(frozen=True)
class OccupationGrid:
    bin_width: float
    masses: np.ndarray = field(repr=False)

    @property
    def density(self) -> np.ndarray:
        return self.masses / self.bin_width


@numba.njit(cache=True)
def _coef(x, is_grid, poly, knots, values):
    if not is_grid:
        return poly[0] + x * (poly[1] + x * poly[2])
    if x <= knots[0]:
        return values[0]
    n = knots.shape[0]
    if x >= knots[n - 1]:
        return values[n - 1]
    lo, hi = 0, n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if knots[mid] <= x:
            lo = mid
        else:
            hi = mid
    w = (x - knots[lo]) / (knots[hi] - knots[lo])
    return values[lo] + w * (values[hi] - values[lo])


@numba.njit(cache=True)
def _euler_fold(x0, z, dt, s_grid, s_poly, s_knots, s_vals, b_grid, b_poly, b_knots, b_vals):
    out = np.empty(z.shape[0] + 1)
    out[0] = x0
    x = x0
    sq = math.sqrt(dt)
    for k in range(z.shape[0]):
        s2 = _coef(x, s_grid, s_poly, s_knots, s_vals)
        s = math.sqrt(s2) if s2 > 0.0 else 0.0
        y = x + _coef(x, b_grid, b_poly, b_knots, b_vals) * dt + s * sq * z[k]
        r = y - 2.0 * math.floor(0.5 * y)
        x = r if r < 1.0 else 2.0 - r
        out[k + 1] = x
    return out


def simulate_path(model: DiffusionModel, T: float, dt_sub: float, rng, x0: float | None = None) -> FinePath:
    """Euler-Maruyama path on ``[0, T]`` with step ``dt_sub``, folded into ``[0, 1]``.

    ``x_{k+1} = fold(x_k + b(x_k) dt + sigma(x_k) sqrt(dt) Z_k)``.  The start is
    drawn from the invariant law unless ``x0`` is given.
    """
    if not dt_sub > 0 or dt_sub > T:
        raise InvalidStep(f"sub-step must satisfy 0 < dt_sub <= T, got dt_sub={dt_sub}, T={T}")
    n_steps = int(round(T / dt_sub))
    if x0 is None:
        x0 = sample_stationary(model, rng)
    z = rng.standard_normal(n_steps)
    values = _euler_fold(float(x0), z, float(dt_sub), *model.sigma2.table(), *model.drift.table())
    values.setflags(write=False)
    return FinePath(float(dt_sub), values, float(T))


def _step_ratio(delta: float, dt_sub: float) -> int:
    step = int(round(delta / dt_sub))
    if step < 1 or abs(step * dt_sub - delta) > 1e-9 * delta:
        raise StepMismatch(f"delta={delta} is not an integer multiple of dt_sub={dt_sub}")
    return step


def subsample(path: FinePath, delta: float) -> Sample:
    """Every ``delta / dt_sub``-th value of the path, ``N = floor(T / delta)``."""
    step = _step_ratio(delta, path.dt_sub)
    n = int(math.floor(path.t_end / delta + 1e-9))
    n = min(n, (len(path.values) - 1) // step)
    return Sample(float(delta), path.values[: n * step + 1 : step])


def bin_index(x, n_bins: int) -> np.ndarray:
    """Zero-based bin of each point; bins are half-open except the last, which holds 1."""
    idx = np.floor(np.asarray(x, dtype=float) * n_bins).astype(np.int64)
    return np.clip(idx, 0, n_bins - 1)


def occupation_density(path: FinePath, n_bins: int = DEFAULT_BINS) -> OccupationGrid:
    """Histogram of the time spent in each of ``n_bins`` regular bins (left Riemann sum)."""
    if n_bins < 4:
        raise ValueError("n_bins must be at least 4")
    left = path.values[:-1]
    counts = np.bincount(bin_index(left, n_bins), minlength=n_bins)
    return OccupationGrid(1.0 / n_bins, counts / len(left))


def min_occupation(path: FinePath, n_bins: int = DEFAULT_BINS) -> float:
    return float(occupation_density(path, n_bins).density.min())


def simulate_conditioned(
    model: DiffusionModel,
    T: float,
    dt_sub: float,
    v: float,
    n_bins: int = DEFAULT_BINS,
    rng=None,
    max_tries: int = 200,
) -> FinePath:
    """Rejection-sample paths until the minimal occupation density reaches ``v``."""
    if v < 0:
        raise ValueError("conditioning level must be nonnegative")
    if rng is None:
        rng = np.random.default_rng()
    for _ in range(max_tries):
        path = simulate_path(model, T, dt_sub, rng)
        if v == 0 or min_occupation(path, n_bins) >= v:
            return path
    raise ConditioningExhausted(f"no path reached min occupation {v} in {max_tries} tries")


@numba.njit(cache=True)
def _sliding_range(x, w):
    n = x.shape[0]
    if w >= n - 1:
        return x.max() - x.min()
    qmax = np.empty(n, np.int64)
    qmin = np.empty(n, np.int64)
    hmax = tmax = 0
    hmin = tmin = 0
    best = 0.0
    for i in range(n):
        while tmax > hmax and x[qmax[tmax - 1]] <= x[i]:
            tmax -= 1
        qmax[tmax] = i
        tmax += 1
        while tmin > hmin and x[qmin[tmin - 1]] >= x[i]:
            tmin -= 1
        qmin[tmin] = i
        tmin += 1
        if qmax[hmax] < i - w:
            hmax += 1
        if qmin[hmin] < i - w:
            hmin += 1
        if i >= w:
            r = x[qmax[hmax]] - x[qmin[hmin]]
            if r > best:
                best = r
    return best


def modulus_of_continuity(path: FinePath, lag: float) -> float:
    """``sup |X_t - X_s|`` over ``|t - s| <= lag`` on the fine grid."""
    if lag < path.dt_sub * (1 - 1e-9):
        raise ValueError("lag must be at least dt_sub")
    w = int(math.floor(lag / path.dt_sub + 1e-9))
    return float(_sliding_range(np.ascontiguousarray(path.values), w))
