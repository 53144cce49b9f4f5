"""Dense symmetric-definite generalized eigenproblems ``A v = lam B v``.

``B`` is Cholesky-factored, the problem is reduced to a standard symmetric
one and diagonalized by cyclic Jacobi rotations.  Matrices here are at most
a few dozen rows, so everything is dense.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .basis import FormSet, SplineBasis, _per_bin, gauss_rule
from .errors import DegenerateSpectrum, NoConvergence, NotPositiveDefinite, QuadratureFailure

log = logging.getLogger(__name__)

PIVOT_FLOOR = 1e-12


@numba.njit(cache=True)
def _cholesky(B, floor):
    n = B.shape[0]
    L = np.zeros((n, n))
    dmax = 0.0
    for i in range(n):
        dmax = max(dmax, B[i, i])
    tol = floor * dmax
    for j in range(n):
        s = B[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not s > tol:
            return L, j
        L[j, j] = math.sqrt(s)
        for i in range(j + 1, n):
            t = B[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / L[j, j]
    return L, -1


@numba.njit(cache=True)
def _forward(L, X):
    # solve L Y = X column by column
    n, m = X.shape
    Y = np.empty((n, m))
    for c in range(m):
        for i in range(n):
            s = X[i, c]
            for k in range(i):
                s -= L[i, k] * Y[k, c]
            Y[i, c] = s / L[i, i]
    return Y


@numba.njit(cache=True)
def _backward_t(L, X):
    # solve L^T Y = X
    n, m = X.shape
    Y = np.empty((n, m))
    for c in range(m):
        for i in range(n - 1, -1, -1):
            s = X[i, c]
            for k in range(i + 1, n):
                s -= L[k, i] * Y[k, c]
            Y[i, c] = s / L[i, i]
    return Y


@numba.njit(cache=True)
def _jacobi(S, max_rotations):
    n = S.shape[0]
    A = S.copy()
    V = np.eye(n)
    rotations = 0
    for sweep in range(100):
        off = 0.0
        diag = 0.0
        for i in range(n):
            diag += A[i, i] * A[i, i]
            for j in range(i + 1, n):
                off += A[i, j] * A[i, j]
        if off <= 1e-32 * diag or off == 0.0:
            return A, V, rotations, True
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                if abs(apq) < 1e-300:
                    A[p, q] = 0.0
                    A[q, p] = 0.0
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = c * apk - s * aqk
                    A[q, k] = s * apk + c * aqk
                A[p, q] = 0.0
                A[q, p] = 0.0
                for k in range(n):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = c * vkp - s * vkq
                    V[k, q] = s * vkp + c * vkq
                rotations += 1
                if rotations > max_rotations:
                    return A, V, rotations, False
    return A, V, rotations, False


def gen_sym_eig(A, B):
    """All eigenpairs of ``A v = lam B v``, values ascending, vectors B-orthonormal.

    Parameters
    ----------
    A : (n, n) array_like
        Symmetric matrix.
    B : (n, n) array_like
        Symmetric positive definite matrix.

    Returns
    -------
    values : (n,) ndarray
    vectors : (n, n) ndarray
        Column ``k`` is the eigenvector of ``values[k]``.

    Raises
    ------
    NotPositiveDefinite
        If a Cholesky pivot of ``B`` falls below ``1e-12 * max(diag B)``.
    NoConvergence
        If Jacobi needs more than ``100 n^2`` rotations.
    """
    A = np.ascontiguousarray(A, dtype=float)
    B = np.ascontiguousarray(B, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape != (n, n):
        raise ValueError("A and B must be square matrices of equal size")
    L, bad = _cholesky(B, PIVOT_FLOOR)
    if bad >= 0:
        raise NotPositiveDefinite(f"Cholesky pivot {bad} below floor; mass form is degenerate")
    C = _forward(L, np.ascontiguousarray(_forward(L, A).T))
    C = 0.5 * (C + C.T)
    D, V, _, ok = _jacobi(C, 100 * n * n)
    if not ok:
        raise NoConvergence(f"Jacobi exceeded {100 * n * n} rotations")
    values = np.diag(D).copy()
    vectors = _backward_t(L, V)
    order = np.argsort(values, kind="stable")
    return values[order], vectors[:, order]


@dataclass(frozen=True)
class Eigenpair:
    """Eigenvalue and coefficients on the ``psi`` basis.

    Coefficients are scaled so that the slope part has ``sum_{j>=1} c_j^2 = J``
    and a nonnegative sum.
    """

    value: float
    coeffs: np.ndarray = field(repr=False)
    normalization: str = "slope_l2"

    @property
    def slopes(self) -> np.ndarray:
        return self.coeffs[1:]


def normalize_slopes(coeffs) -> np.ndarray:
    """Rescale so ``sum_{j>=1} c_j^2 = J`` and ``sum_{j>=1} c_j >= 0``."""
    c = np.asarray(coeffs, dtype=float).copy()
    J = len(c) - 1
    norm = np.sqrt(np.sum(c[1:] ** 2))
    if norm == 0.0:
        raise DegenerateSpectrum("eigenvector has zero slope part")
    c *= math.sqrt(J) / norm
    if c[1:].sum() < 0:
        c = -c
    return c


def first_nontrivial_pair(forms: FormSet) -> Eigenpair:
    """Smallest nontrivial pair of ``l(u, v) = gamma g(u, v)`` on ``V_J``.

    The zero eigenvalue carried by constants is dropped.
    """
    if forms.underfilled:
        raise NotPositiveDefinite("some bin holds fewer than two observations")
    values, vectors = gen_sym_eig(forms.L, forms.G)
    # the trivial pair is the one whose vector is closest to constant
    trivial = int(np.argmin(np.linalg.norm(vectors[1:, :2], axis=0)))
    keep = [k for k in range(len(values)) if k != trivial]
    gamma = values[keep[0]]
    scale = max(abs(values[-1]), 1.0)
    if not gamma > 1e-12 * scale:
        raise DegenerateSpectrum(f"first nontrivial eigenvalue {gamma:.3e} is not positive")
    return Eigenpair(float(gamma), normalize_slopes(vectors[:, keep[0]]))


def centered_pair(forms: FormSet) -> Eigenpair:
    """Same pair solved in the centered coordinates ``psi_j - offset_j``."""
    L0, M0 = forms.centered()
    values, vectors = gen_sym_eig(L0, M0)
    w = vectors[:, 0]
    coeffs = np.concatenate(([-np.dot(w, forms.offsets)], w))
    return Eigenpair(float(values[0]), normalize_slopes(coeffs))


def eigen_fg(forms: FormSet, F, M=None):
    """Eigenpairs of ``f(w, v) = lam g(w, v)`` on the centered space.

    Parameters
    ----------
    forms : FormSet
    F : (J, J) array_like
        Diagonal FZ-weighted stiffness matrix.
    M : (J, J) array_like, optional
        Centered Gram matrix; defaults to the one derived from ``forms``.

    Returns
    -------
    list of Eigenpair
        Ascending in value.  Coefficients include the centering constant in
        position 0.  The first vector is sign-fixed to be positive when the
        Perron-Frobenius condition holds.
    """
    F = np.asarray(F, dtype=float)
    if np.any(np.diag(F) <= 0):
        raise NotPositiveDefinite("FZ stiffness has non-positive diagonal")
    if M is None:
        M = forms.centered()[1]
    values, vectors = gen_sym_eig(F, M)
    out = []
    for k in range(len(values)):
        w = vectors[:, k]
        coeffs = np.concatenate(([-np.dot(w, forms.offsets)], w))
        out.append(Eigenpair(float(values[k]), normalize_slopes(coeffs)))
    return out


def _population_forms(sigma2, mu, J, n_gauss):
    basis = SplineBasis(J)
    nodes, weights = _per_bin(gauss_rule(n_gauss), J)
    m = np.asarray(mu(nodes), dtype=float)
    s = np.asarray(sigma2(nodes), dtype=float)
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(s))):
        raise QuadratureFailure("non-finite coefficient at quadrature nodes")
    if np.any(m <= 0):
        raise ValueError("density must be strictly positive")
    Psi = basis.evaluate(nodes)
    mass = Psi.T @ ((weights * m)[:, None] * Psi)
    stiff = np.zeros((J + 1, J + 1))
    stiff[1:, 1:] = np.diag(np.bincount(basis.bin_of(nodes), weights=weights * s * m, minlength=J))
    return stiff, mass


def population_eigenpair(sigma2, mu, J: int, n_gauss: int = 16) -> Eigenpair:
    """First nontrivial pair of ``int w'v' sigma2 mu = 2 lam int w v mu`` on ``V_J``.

    Stiffness and mass forms use ``n_gauss``-point Gauss-Legendre per bin.
    ``mu`` is any callable density (e.g. a :class:`~voldiff.model.DensityGrid`).
    The returned value is ``lam``, i.e. half the eigenvalue of the raw pencil.
    """
    values, vectors = gen_sym_eig(*_population_forms(sigma2, mu, J, n_gauss))
    return Eigenpair(float(values[1] / 2.0), normalize_slopes(vectors[:, 1]))


def population_spectrum(sigma2, mu, J: int, n_gauss: int = 16) -> np.ndarray:
    """All eigenvalues ``lam`` of the population problem, ascending."""
    return gen_sym_eig(*_population_forms(sigma2, mu, J, n_gauss))[0] / 2.0
