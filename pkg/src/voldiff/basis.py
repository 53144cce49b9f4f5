"""Linear-spline basis on regular bins and the empirical bilinear forms.

The basis is ``psi_0 = 1`` and ``psi_j(x) = int_0^x 1_j`` for ``j = 1..J``,
so ``psi_j' = 1_j`` and a function ``u = sum_j u_j psi_j`` has slope ``u_j``
on bin ``j``.  Bins follow ``[(j-1)/J, j/J)`` with the last bin closed.

All forms are returned as ``(J+1, J+1)`` matrices in the ``psi`` coordinates;
the centered space (functions orthogonal to constants under the empirical
measure) uses the ``J`` coordinates ``psi_j - offset_j``.
"""

from __future__ import annotations

import logging
from functools import lru_cache
from dataclasses import dataclass, field

import numpy as np

from .errors import TooFewObservations
from .simulate import Sample, bin_index

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplineBasis:
    J: int

    def __post_init__(self):
        if int(self.J) != self.J or self.J < 2:
            raise ValueError(f"J must be an integer >= 2, got {self.J}")
        object.__setattr__(self, "J", int(self.J))

    @property
    def width(self) -> float:
        return 1.0 / self.J

    @property
    def knots(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.J + 1)

    def bin_of(self, x) -> np.ndarray:
        return bin_index(x, self.J)

    def evaluate(self, x) -> np.ndarray:
        """Design matrix ``[psi_j(x_n)]`` of shape ``(len(x), J+1)``."""
        x = np.asarray(x, dtype=float)
        out = np.empty((x.shape[0], self.J + 1))
        out[:, 0] = 1.0
        left = np.arange(self.J) / self.J
        np.clip(x[:, None] - left[None, :], 0.0, self.width, out=out[:, 1:])
        return out

    def function(self, coeffs, x) -> np.ndarray:
        """Evaluate ``sum_j coeffs_j psi_j`` at ``x``."""
        c = np.asarray(coeffs, dtype=float)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        # value at the left knot of each bin, then the local slope
        at_knot = c[0] + np.concatenate(([0.0], np.cumsum(c[1:]) * self.width))
        k = self.bin_of(x)
        return at_knot[k] + c[1:][k] * np.clip(x - k * self.width, 0.0, self.width)

    def lebesgue_gram(self) -> np.ndarray:
        """``int_0^1 psi_i psi_j dx`` (exact two-point Gauss per bin)."""
        g = gauss_rule(2)
        nodes, weights = _per_bin(g, self.J)
        Psi = self.evaluate(nodes)
        return Psi.T @ (weights[:, None] * Psi)


@lru_cache(maxsize=None)
def gauss_rule(n: int):
    """``n``-point Gauss-Legendre nodes and weights on ``[-1, 1]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _per_bin(rule, J):
    x, w = rule
    left = np.arange(J)[:, None] / J
    nodes = left + 0.5 * (x[None, :] + 1.0) / J
    return nodes.ravel(), np.broadcast_to(0.5 * w / J, nodes.shape).ravel()


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Atoms at the observations; the first and last carry half weight ``1/(2N)``."""

    atoms: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    def bin_masses(self, J: int) -> np.ndarray:
        return np.bincount(bin_index(self.atoms, J), weights=self.weights, minlength=J)


def empirical_measure(sample: Sample) -> EmpiricalMeasure:
    n = sample.n
    if n < 2:
        raise TooFewObservations(f"need N >= 2 increments, got N={n}")
    w = np.full(n + 1, 1.0 / n)
    w[0] = w[-1] = 0.5 / n
    return EmpiricalMeasure(sample.values, w)


def _sym(a):
    return 0.5 * (a + a.T)


def form_g(sample: Sample, basis: SplineBasis, _Psi=None) -> np.ndarray:
    """``g(u, v) = int u v d mu_N``."""
    Psi = basis.evaluate(sample.values) if _Psi is None else _Psi
    w = empirical_measure(sample).weights
    return _sym(Psi.T @ (w[:, None] * Psi))


def form_l(sample: Sample, basis: SplineBasis, _Psi=None) -> np.ndarray:
    """``l(u, v) = (1/2T) sum (u(X_{n+1}) - u(X_n)) (v(X_{n+1}) - v(X_n))``."""
    Psi = basis.evaluate(sample.values) if _Psi is None else _Psi
    D = np.diff(Psi, axis=0)
    return _sym(D.T @ D) / (2.0 * sample.T)


def form_p(sample: Sample, basis: SplineBasis, _Psi=None) -> np.ndarray:
    """``p(u, v) = (1/2N) sum (u(X_n) v(X_{n+1}) + v(X_n) u(X_{n+1}))``."""
    Psi = basis.evaluate(sample.values) if _Psi is None else _Psi
    C = Psi[:-1].T @ Psi[1:]
    return (C + C.T) / (2.0 * sample.n)


def form_f(sample: Sample, basis: SplineBasis, fz) -> np.ndarray:
    """Diagonal ``J x J`` matrix of ``f(psi_i, psi_j) = 1/2 int 1_i 1_j sigma2_FZ d mu_N``."""
    if fz.J != basis.J:
        raise ValueError("FZ estimate and basis use different bin counts")
    masses = empirical_measure(sample).bin_masses(basis.J)
    vals = np.where(fz.defined, fz.values, 0.0)
    return np.diag(0.5 * vals * masses)


def centered_offsets(measure: EmpiricalMeasure, basis: SplineBasis) -> np.ndarray:
    """``int psi_j d mu_N`` for ``j = 1..J``."""
    return basis.evaluate(measure.atoms)[:, 1:].T @ measure.weights


def visit_counts(sample: Sample, basis: SplineBasis) -> np.ndarray:
    return np.bincount(basis.bin_of(sample.values), minlength=basis.J)


def matrix_M(measure: EmpiricalMeasure, basis: SplineBasis) -> np.ndarray:
    """Centered Gram matrix from the CDF-survival representation.

    ``M_ij = int_{bin i} int_{bin j} F(y ^ z) (1 - F(y v z)) dy dz`` with
    ``F`` the empirical distribution function.  ``F`` is a step function, so
    the double integral is evaluated exactly segment by segment.
    """
    J = basis.J
    order = np.argsort(measure.atoms, kind="stable")
    atoms = np.clip(measure.atoms[order], 0.0, 1.0)
    cumw = np.concatenate(([0.0], np.cumsum(measure.weights[order])))
    total = cumw[-1]
    pts = np.unique(np.concatenate((basis.knots, atoms)))
    h = np.diff(pts)
    F = cumw[np.searchsorted(atoms, pts[:-1], side="right")] / total
    seg_bin = bin_index(0.5 * (pts[:-1] + pts[1:]), J)
    a = F * h
    b = (1.0 - F) * h
    A = np.bincount(seg_bin, weights=a, minlength=J)
    B = np.bincount(seg_bin, weights=b, minlength=J)
    # within-bin exclusive prefix sums of a
    ca = np.cumsum(a) - a
    start = np.concatenate(([0], np.cumsum(np.bincount(seg_bin, minlength=J))[:-1]))
    ca -= (np.cumsum(a) - a)[start][seg_bin]
    diag = np.bincount(seg_bin, weights=F * (1.0 - F) * h * h + 2.0 * b * ca, minlength=J)
    M = np.triu(np.outer(A, B), 1)
    M = M + M.T
    M[np.diag_indices(J)] = diag
    return M


@dataclass(frozen=True)
class FormSet:
    """Matrices of the empirical forms on ``V_J`` plus centering data.

    ``underfilled`` flags samples with fewer than two visits in some bin; the
    mass form may then be singular on ``V_J``.
    """

    basis: SplineBasis
    delta: float
    G: np.ndarray = field(repr=False)
    L: np.ndarray = field(repr=False)
    P: np.ndarray = field(repr=False)
    offsets: np.ndarray = field(repr=False)
    masses: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)

    @property
    def J(self) -> int:
        return self.basis.J

    @property
    def underfilled(self) -> bool:
        return bool(self.counts.min() < 2)

    def centered(self):
        """``(L0, M0)``: the stiffness and mass forms in centered coordinates."""
        c = self.offsets
        return self.L[1:, 1:], self.G[1:, 1:] - np.outer(c, c)


def build_forms(sample: Sample, J: int, check: bool = True) -> FormSet:
    """Assemble ``g``, ``l`` and ``p`` from one evaluation of the design matrix."""
    basis = SplineBasis(J)
    measure = empirical_measure(sample)
    Psi = basis.evaluate(sample.values)
    G = form_g(sample, basis, Psi)
    L = form_l(sample, basis, Psi)
    P = form_p(sample, basis, Psi)
    if check:
        scale = max(np.abs(G).max(), np.abs(P).max()) / sample.delta
        gap = np.abs(L - (G - P) / sample.delta).max()
        if gap > 1e-10 * max(scale, np.abs(L).max()):
            log.warning("l != (g - p)/delta: max gap %.3e", gap)
    forms = FormSet(
        basis=basis,
        delta=sample.delta,
        G=G,
        L=L,
        P=P,
        offsets=G[0, 1:].copy(),
        masses=measure.bin_masses(J),
        counts=visit_counts(sample, basis),
    )
    if forms.underfilled:
        log.debug("J=%d: some bin has fewer than two visits", J)
    return forms
