"""Diffusion coefficients, the nonparametric class check and the stationary law.

A model is a pair of coefficient functions on ``[0, 1]``: the squared
volatility ``sigma2`` and the drift ``drift``, together with the constants
``d`` (ellipticity floor) and ``D`` (norm ceiling) of the class
``Theta(d, D)``.  Coefficients are either closed-form polynomials of degree
at most two or piecewise-linear grids, so that they can be evaluated both in
numpy and inside the compiled path simulator.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import EllipticityViolation, ModelError, NormViolation, QuadratureFailure

CHECK_GRID = 2048
DENSITY_GRID = 2048

_POLY_DEGREE = {"constant": 0, "linear": 1, "quadratic": 2}


@dataclass(frozen=True)
class CoefficientFn:
    """A deterministic coefficient function on ``[0, 1]``.

    Parameters
    ----------
    kind : {"constant", "linear", "quadratic", "piecewise_linear"}
        Registry entry.  Polynomial kinds take their monomial coefficients
        ``(c0, c1, c2)`` in increasing degree, so ``quadratic`` with params
        ``(c0, c1, c2)`` is ``c0 + c1*x + c2*x**2``.
    params : tuple
        For polynomial kinds the coefficients; for ``piecewise_linear`` a pair
        ``(knots, values)`` with strictly increasing knots from 0 to 1.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind in _POLY_DEGREE:
            params = tuple(float(p) for p in np.ravel(self.params))
            if len(params) != _POLY_DEGREE[self.kind] + 1:
                raise ModelError(
                    f"{self.kind} coefficient needs {_POLY_DEGREE[self.kind] + 1} "
                    f"parameters, got {len(params)}"
                )
        elif self.kind == "piecewise_linear":
            try:
                knots, values = self.params
            except (TypeError, ValueError):
                raise ModelError("piecewise_linear params must be (knots, values)") from None
            knots = tuple(float(k) for k in knots)
            values = tuple(float(v) for v in values)
            k = np.asarray(knots)
            if len(knots) < 2 or len(knots) != len(values):
                raise ModelError("piecewise_linear needs matching knots/values, length >= 2")
            if np.any(np.diff(k) <= 0):
                raise ModelError("piecewise_linear knots must be strictly increasing")
            if k[0] > 0.0 or k[-1] < 1.0:
                raise ModelError("piecewise_linear knots must cover [0, 1]")
            params = (knots, values)
        else:
            raise ModelError(f"unknown coefficient kind {self.kind!r}")
        if not np.all(np.isfinite(np.asarray(_flat(params)))):
            raise ModelError("coefficient parameters must be finite")
        object.__setattr__(self, "params", params)

    @property
    def is_grid(self) -> bool:
        return self.kind == "piecewise_linear"

    def poly(self) -> np.ndarray:
        """Monomial coefficients padded to length 3 (zeros for grids)."""
        out = np.zeros(3)
        if not self.is_grid:
            out[: len(self.params)] = self.params
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_grid:
            knots, values = self.params
            return np.interp(x, knots, values)
        c = self.poly()
        return c[0] + x * (c[1] + x * c[2])

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_grid:
            knots, values = (np.asarray(p) for p in self.params)
            slopes = np.diff(values) / np.diff(knots)
            idx = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, len(slopes) - 1)
            return slopes[idx]
        c = self.poly()
        return c[1] + 2.0 * c[2] * x

    def table(self):
        """Arrays consumed by the compiled simulator: (is_grid, poly, knots, values)."""
        if self.is_grid:
            knots, values = self.params
            return True, np.zeros(3), np.asarray(knots, float), np.asarray(values, float)
        return False, self.poly(), np.array([0.0, 1.0]), np.zeros(2)

    def to_dict(self) -> dict:
        if self.is_grid:
            return {"kind": self.kind, "params": [list(self.params[0]), list(self.params[1])]}
        return {"kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, spec: dict) -> "CoefficientFn":
        try:
            kind = spec["kind"]
            params = spec["params"]
        except (KeyError, TypeError):
            raise ModelError(f"coefficient spec needs 'kind' and 'params': {spec!r}") from None
        if kind == "piecewise_linear":
            return cls(kind, (tuple(params[0]), tuple(params[1])))
        return cls(kind, tuple(np.ravel(params)))


def _flat(params):
    if params and isinstance(params[0], tuple):
        return params[0] + params[1]
    return params


def constant(c) -> CoefficientFn:
    return CoefficientFn("constant", (c,))


def linear(c0, c1) -> CoefficientFn:
    return CoefficientFn("linear", (c0, c1))


def quadratic(c0, c1, c2) -> CoefficientFn:
    return CoefficientFn("quadratic", (c0, c1, c2))


def piecewise_linear(knots, values) -> CoefficientFn:
    return CoefficientFn("piecewise_linear", (tuple(knots), tuple(values)))


@dataclass(frozen=True)
class DiffusionModel:
    """Coefficient pair with its class constants.

    Constructing the dataclass directly skips the class checks; use
    :func:`validate_model` for checked construction.
    """

    sigma2: CoefficientFn
    drift: CoefficientFn
    d: float = 0.1
    D: float = 1.0

    def sigma(self, x):
        return np.sqrt(np.maximum(self.sigma2(x), 0.0))

    def to_dict(self) -> dict:
        return {
            "sigma2": self.sigma2.to_dict(),
            "drift": self.drift.to_dict(),
            "d": self.d,
            "D": self.D,
        }

    @classmethod
    def from_dict(cls, spec: dict, validate: bool = True) -> "DiffusionModel":
        try:
            sigma2 = CoefficientFn.from_dict(spec["sigma2"])
            drift = CoefficientFn.from_dict(spec["drift"])
            d, D = float(spec["d"]), float(spec["D"])
        except KeyError as exc:
            raise ModelError(f"model spec is missing {exc}") from None
        if validate:
            return validate_model(sigma2, drift, d, D)
        return cls(sigma2, drift, d, D)


def h1_norm(fn: CoefficientFn, n_grid: int = CHECK_GRID) -> float:
    """``||f||_L2 + ||f'||_L2`` on a regular grid (trapezoid rule)."""
    x = np.linspace(0.0, 1.0, n_grid)
    f = fn(x)
    df = fn.derivative(x)
    return float(np.sqrt(trapezoid(f * f, x)) + np.sqrt(trapezoid(df * df, x)))


def validate_model(sigma2: CoefficientFn, drift: CoefficientFn, d: float, D: float) -> DiffusionModel:
    """Check membership of ``(sigma2, drift)`` in ``Theta(d, D)`` on a 2048-point grid.

    Raises
    ------
    EllipticityViolation
        If ``min sigma2 < d``.
    NormViolation
        If ``sup |drift| >= D`` or the discretized H1 norm of ``sigma2`` is ``>= D``.
    """
    if not d > 0:
        raise ModelError(f"ellipticity floor must be positive, got d={d}")
    if not D > d:
        raise ModelError(f"norm ceiling must exceed the floor, got d={d}, D={D}")
    x = np.linspace(0.0, 1.0, CHECK_GRID)
    s2 = sigma2(x)
    b = drift(x)
    if not (np.all(np.isfinite(s2)) and np.all(np.isfinite(b))):
        raise ModelError("coefficients must be finite on [0, 1]")
    if s2.min() < d:
        raise EllipticityViolation(f"min sigma2 = {s2.min():.6g} < d = {d}")
    if np.abs(b).max() >= D:
        raise NormViolation(f"sup |drift| = {np.abs(b).max():.6g} >= D = {D}")
    norm = h1_norm(sigma2)
    if norm >= D:
        raise NormViolation(f"H1 norm of sigma2 = {norm:.6g} >= D = {D}")
    return DiffusionModel(sigma2, drift, float(d), float(D))


def reference_model() -> DiffusionModel:
    """Mean-reverting drift ``0.2 - 0.4x`` with ``sigma2 = 0.4 - (x - 0.5)**2``."""
    return validate_model(quadratic(0.15, 1.0, -1.0), linear(0.2, -0.4), 0.1, 1.0)


def reflected_bm(c: float = 1.0) -> DiffusionModel:
    """Driftless model with constant squared volatility ``c``."""
    return validate_model(constant(c), constant(0.0), 0.5 * c, 2.0 * c + 1.0)


@dataclass(frozen=True)
class DensityGrid:
    """Tabulated density on a regular grid with its cumulative distribution."""

    knots: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    cdf: np.ndarray = field(repr=False)

    def __call__(self, x):
        return np.interp(x, self.knots, self.values)

    def inverse_cdf(self, u):
        """Linear interpolation of the inverse distribution function."""
        return np.interp(u, self.cdf, self.knots)


@functools.lru_cache(maxsize=64)
def invariant_density(model: DiffusionModel, n_grid: int = DENSITY_GRID) -> DensityGrid:
    """Stationary density ``mu(x) ~ exp(int_0^x 2b/sigma2) / sigma2(x)`` of the reflected diffusion."""
    if n_grid < 64:
        raise ValueError("n_grid must be at least 64")
    x = np.linspace(0.0, 1.0, n_grid)
    s2 = model.sigma2(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = 2.0 * model.drift(x) / s2
        log_s2 = np.log(s2)
    if not (np.all(np.isfinite(ratio)) and np.all(np.isfinite(log_s2))):
        raise QuadratureFailure("non-finite integrand in the stationary density")
    log_mu = cumulative_trapezoid(ratio, x, initial=0.0) - log_s2
    mu = np.exp(log_mu - log_mu.max())
    mu /= trapezoid(mu, x)
    cdf = cumulative_trapezoid(mu, x, initial=0.0)
    cdf /= cdf[-1]
    cdf[-1] = 1.0
    for arr in (x, mu, cdf):
        arr.setflags(write=False)
    return DensityGrid(x, mu, cdf)


def sample_stationary(model: DiffusionModel, rng) -> float:
    """Draw a starting point from the invariant law by inverse-CDF sampling."""
    return float(invariant_density(model).inverse_cdf(rng.random()))
