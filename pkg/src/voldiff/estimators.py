"""Volatility estimators and crossing diagnostics.

Three estimators of the squared volatility are provided:

* ``fz_forward`` / ``fz_symmetric``: binned ratios of squared increments to
  visit counts (Florens-Zmirou type), the symmetric one averaging the forward
  and the time-reversed sample.
* ``ghr``: the pointwise spectral estimator built from the first nontrivial
  eigenpair and a spline projection of the empirical measure.
* ``spectral_averaged``: the bin-averaged spectral estimator, with an optional
  upper threshold, and its high-frequency form ``spectral_tilde``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .basis import FormSet, SplineBasis, build_forms, empirical_measure
from .eigen import Eigenpair, first_nontrivial_pair, gen_sym_eig
from .errors import StepMismatch, TooFewObservations
from .simulate import FinePath, Sample, _step_ratio, bin_index

log = logging.getLogger(__name__)

GHR_MASK = 1e-12
# 1 - delta*gamma below this counts as near-singular; in float64 |zeta| * delta
# cannot exceed about 36.7, so a bound on |zeta| alone would never trigger
NEAR_SINGULAR_KAPPA = 1e-12


@dataclass(frozen=True)
class PiecewiseVol:
    """Bin-wise constant estimate ``sum_j values_j 1_j(x)``."""

    J: int
    values: np.ndarray = field(repr=False)
    defined: np.ndarray = field(repr=False)

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.J + 1)

    def __call__(self, x):
        idx = bin_index(x, self.J)
        return np.where(self.defined[idx], self.values[idx], np.nan)

    def evaluate(self, x):
        """``(values, defined)`` at the points ``x``."""
        idx = bin_index(x, self.J)
        return self.values[idx], self.defined[idx]


@dataclass(frozen=True)
class GridVol:
    x: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    defined: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class SpectralIntermediates:
    gamma1: float
    zeta1: float
    kappa1: float
    pair: Eigenpair = field(repr=False)
    numerators: np.ndarray = field(repr=False)
    denominators: np.ndarray = field(repr=False)
    zeta_defined: bool = True
    near_singular: bool = False


def _masked_ratio(num, den):
    ok = den != 0
    out = np.zeros_like(num, dtype=float)
    np.divide(num, den, out=out, where=ok)
    return out, ok


def fz_forward(sample: Sample, J: int) -> PiecewiseVol:
    """Forward binned estimator; the end points carry half weight in the denominator."""
    if sample.n < 2:
        raise TooFewObservations("need at least two increments")
    idx = bin_index(sample.values, J)
    dx2 = np.diff(sample.values) ** 2
    num = np.bincount(idx[:-1], weights=dx2, minlength=J)
    den = sample.delta * sample.n * empirical_measure(sample).bin_masses(J)
    return PiecewiseVol(J, *_masked_ratio(num, den))


def fz_symmetric(sample: Sample, J: int) -> PiecewiseVol:
    """Time-symmetric binned estimator (both end points of each increment count)."""
    if sample.n < 2:
        raise TooFewObservations("need at least two increments")
    idx = bin_index(sample.values, J)
    dx2 = np.diff(sample.values) ** 2
    num = np.bincount(idx[:-1], weights=dx2, minlength=J) + np.bincount(idx[1:], weights=dx2, minlength=J)
    hits = np.bincount(idx[:-1], minlength=J) + np.bincount(idx[1:], minlength=J)
    return PiecewiseVol(J, *_masked_ratio(num, sample.delta * hits))


def zeta_from_gamma(gamma1: float, delta: float):
    """``log(1 - delta*gamma)/delta`` and whether it is defined (``delta*gamma < 1``)."""
    x = delta * gamma1
    if x < 1.0:
        return math.log1p(-x) / delta, True
    return 0.0, False


def _intermediates(forms: FormSet, pair: Eigenpair):
    gamma = pair.value
    zeta, ok = zeta_from_gamma(gamma, forms.delta)
    kappa = 1.0 - forms.delta * gamma
    if ok and not 0.0 < kappa < 1.0:
        log.warning("kappa1 = %.6g outside (0, 1)", kappa)
    near = ok and kappa < NEAR_SINGULAR_KAPPA
    return gamma, zeta, kappa, ok, near


def spectral_averaged(
    sample: Sample,
    J: int,
    threshold: float | None = None,
    forms: FormSet | None = None,
    pair: Eigenpair | None = None,
):
    """Bin-averaged spectral estimate and the quantities it was built from.

    ``value_j = -2 zeta1 g(psi_j, u1) / (u1_j * mu_N(bin j))`` with
    ``zeta1 = log(1 - delta gamma1)/delta``.  Bins with a zero slope are masked;
    when ``delta*gamma1 >= 1`` every bin is masked and ``zeta_defined`` is false.

    Parameters
    ----------
    sample : Sample
    J : int
        Number of bins.
    threshold : float, optional
        Upper cap applied to the values (low-frequency variant).
    forms, pair : optional
        Precomputed forms and first nontrivial eigenpair for reuse.

    Returns
    -------
    (PiecewiseVol, SpectralIntermediates)
    """
    forms = build_forms(sample, J) if forms is None else forms
    pair = first_nontrivial_pair(forms) if pair is None else pair
    gamma, zeta, kappa, ok, near = _intermediates(forms, pair)
    u = pair.coeffs
    num = -2.0 * zeta * (forms.G @ u)[1:]
    den = u[1:] * forms.masses
    values, defined = _masked_ratio(num, den)
    if not ok:
        values[:] = 0.0
        defined[:] = False
    if threshold is not None:
        values = np.minimum(values, threshold)
    inter = SpectralIntermediates(gamma, zeta, kappa, pair, num, den, ok, near)
    return PiecewiseVol(J, values, defined), inter


def spectral_tilde(sample: Sample, J: int, forms: FormSet | None = None, pair: Eigenpair | None = None) -> PiecewiseVol:
    """``2 l(u1, psi_j) / (u1_j * mu_N(bin j))``, the spectral estimate without the eigenvalue ratio."""
    forms = build_forms(sample, J) if forms is None else forms
    pair = first_nontrivial_pair(forms) if pair is None else pair
    u = pair.coeffs
    return PiecewiseVol(J, *_masked_ratio(2.0 * (forms.L @ u)[1:], u[1:] * forms.masses))


class GHRFunction:
    """Pointwise spectral estimate ``2 zeta1 int_0^x u1 d mu_N / (u1'(x) mu_hat(x))``.

    ``mu_hat`` is the Lebesgue-L2 projection of the empirical measure onto
    the spline space.  Calling the object returns ``(values, defined)``.
    """

    def __init__(self, sample: Sample, J: int, forms: FormSet | None = None, pair: Eigenpair | None = None):
        self.forms = build_forms(sample, J) if forms is None else forms
        self.pair = first_nontrivial_pair(self.forms) if pair is None else pair
        self.basis = self.forms.basis
        self.J = J
        self.zeta, self.zeta_defined = zeta_from_gamma(self.pair.value, sample.delta)
        measure = empirical_measure(sample)
        order = sample.sorted_order()
        self._atoms = measure.atoms[order]
        u_at = self.basis.function(self.pair.coeffs, self._atoms)
        self._cum = np.concatenate(([0.0], np.cumsum(measure.weights[order] * u_at)))
        rhs = self.forms.G[0]  # int psi_i d mu_N
        self.mu_coeffs = np.linalg.solve(self.basis.lebesgue_gram(), rhs)

    @property
    def edges(self) -> np.ndarray:
        return self.basis.knots

    def density(self, x):
        return self.basis.function(self.mu_coeffs, x)

    def partial_integral(self, x):
        """``int_0^x u1 d mu_N`` including atoms at ``x``."""
        return self._cum[np.searchsorted(self._atoms, np.atleast_1d(x), side="right")]

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        slope = self.pair.slopes[bin_index(x, self.J)]
        den = slope * self.density(x)
        defined = np.abs(den) >= GHR_MASK
        values = np.zeros_like(x)
        np.divide(2.0 * self.zeta * self.partial_integral(x), den, out=values, where=defined)
        if not self.zeta_defined:
            values[:] = 0.0
            defined[:] = False
        return values, defined

    def evaluate(self, x):
        return self(x)


def ghr(sample: Sample, J: int, eval_grid, forms: FormSet | None = None, pair: Eigenpair | None = None) -> GridVol:
    """Pointwise spectral estimate evaluated on ``eval_grid``."""
    fn = GHRFunction(sample, J, forms, pair)
    x = np.asarray(eval_grid, dtype=float)
    values, defined = fn(x)
    return GridVol(x, values, defined)


def spectrum(forms: FormSet) -> np.ndarray:
    """All eigenvalues of ``l(u, v) = gamma g(u, v)`` on ``V_J``, ascending."""
    return gen_sym_eig(forms.L, forms.G)[0]


def crossing_stat(sample: Sample, alpha: float):
    """Unsigned and signed level-crossing statistics at ``alpha``.

    With ``chi_n = 1(X_{n+1} < alpha) - 1(X_n < alpha)`` returns
    ``sum |chi_n| (dX_n)^2`` and
    ``sum chi_n ((X_{n+1} - alpha)^2 - (X_n - alpha)^2)``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    x = sample.values
    below = (x < alpha).astype(np.int64)
    chi = np.diff(below)
    dx2 = np.diff(x) ** 2
    unsigned = float(np.sum(np.abs(chi) * dx2))
    signed = float(np.sum(chi * ((x[1:] - alpha) ** 2 - (x[:-1] - alpha) ** 2)))
    return unsigned, signed


def occupation_riemann_gap(path: FinePath, sample: Sample, alpha: float) -> float:
    """Fine-grid occupation time of ``[0, alpha)`` minus its Riemann estimate from the sample.

    Both are normalized by the horizon of the sample.
    """
    step = _step_ratio(sample.delta, path.dt_sub)
    n = sample.n
    if len(path.values) < n * step + 1:
        raise StepMismatch("sample horizon exceeds the path")
    fine = path.values[: n * step]
    return float(np.mean(fine < alpha) - np.mean(sample.values[:-1] < alpha))
