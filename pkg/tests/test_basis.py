import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from conftest import brute_forms, filled_sample, psi_scalar, random_sample
from voldiff import (
    Sample,
    SplineBasis,
    build_forms,
    centered_offsets,
    empirical_measure,
    form_f,
    form_g,
    form_l,
    form_p,
    fold,
    fz_symmetric,
    matrix_M,
    reference_model,
    rng_stream,
    simulate_conditioned,
    subsample,
    visit_counts,
)
from voldiff.errors import TooFewObservations
from voldiff.estimators import PiecewiseVol


def test_basis_values():
    b = SplineBasis(4)
    x = np.array([0.0, 0.1, 0.25, 0.6, 1.0])
    Psi = b.evaluate(x)
    for n, xn in enumerate(x):
        for j in range(5):
            assert Psi[n, j] == pytest.approx(psi_scalar(j, 4, xn), abs=1e-15)
    assert np.all(Psi[:, 0] == 1.0)
    assert np.all((Psi[:, 1:] >= 0) & (Psi[:, 1:] <= 0.25))
    with pytest.raises(ValueError):
        SplineBasis(1)


def test_basis_function_matches_design_matrix():
    b = SplineBasis(7)
    rng = np.random.default_rng(0)
    c = rng.standard_normal(8)
    x = np.r_[rng.random(500), 0.0, 1.0, b.knots]
    assert np.allclose(b.function(c, x), b.evaluate(x) @ c, atol=1e-14)


def test_lebesgue_gram_by_quadrature():
    J = 3
    b = SplineBasis(J)
    G = b.lebesgue_gram()
    for i in range(J + 1):
        for j in range(J + 1):
            val = quad(lambda x: psi_scalar(i, J, x) * psi_scalar(j, J, x), 0, 1, points=list(b.knots))[0]
            assert G[i, j] == pytest.approx(val, abs=1e-13)


def test_empirical_measure(tiny):
    m = empirical_measure(tiny)
    assert np.allclose(m.weights, [0.25, 0.5, 0.25])
    assert m.integrate(np.ones(3)) == 1.0
    assert m.bin_masses(2)[0] == pytest.approx(0.75)
    with pytest.raises(TooFewObservations):
        empirical_measure(Sample(0.1, np.array([0.1, 0.2])))


def test_form_g_examples(tiny):
    G = form_g(tiny, SplineBasis(2))
    assert G[0, 0] == pytest.approx(1.0)
    assert G[1, 1] == pytest.approx(0.25 * 0.2**2 + 0.5 * 0.3**2 + 0.25 * 0.5**2)
    J = 5
    G = form_g(Sample(0.1, np.ones(4)), SplineBasis(J))
    assert np.allclose(G[1:, 1:], 1.0 / J**2)


def test_form_l_examples(tiny):
    L = form_l(tiny, SplineBasis(2))
    assert L[1, 1] == pytest.approx(0.025)
    assert np.allclose(L[0], 0.0) and np.allclose(L[:, 0], 0.0)
    assert np.allclose(form_l(Sample(0.1, np.full(6, 0.37)), SplineBasis(4)), 0.0)


def test_form_p_constant_sample():
    c, J = 0.37, 4
    b = SplineBasis(J)
    psi = b.evaluate([c])[0]
    assert np.allclose(form_p(Sample(0.1, np.full(6, c)), b), np.outer(psi, psi))


def test_forms_match_brute_force(tiny):
    for sample, J in ((tiny, 2), (random_sample(np.random.default_rng(3), 12), 3), (random_sample(np.random.default_rng(4), 9), 5)):
        G, L, P = brute_forms(list(sample.values), sample.delta, J)
        b = SplineBasis(J)
        assert np.allclose(form_g(sample, b), G, atol=1e-14)
        assert np.allclose(form_l(sample, b), L, atol=1e-13)
        assert np.allclose(form_p(sample, b), P, atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(3, 400), J=st.integers(2, 16))
def test_form_identities(seed, n, J):
    s = random_sample(np.random.default_rng(seed), n)
    f = build_forms(s, J, check=False)
    for A in (f.G, f.L, f.P):
        assert np.allclose(A, A.T, atol=1e-12)
    scale = max(np.abs(f.L).max(), np.abs(f.G).max() / s.delta)
    assert np.max(np.abs(f.L - (f.G - f.P) / s.delta)) <= 1e-10 * scale
    assert np.max(np.abs(f.L @ np.eye(J + 1)[0])) <= 1e-10 * scale
    assert np.linalg.eigvalsh(f.L).min() >= -1e-10 * scale


def test_l_tridiagonal_for_small_increments():
    J = 8
    s = random_sample(np.random.default_rng(5), 3000, delta=1e-3, step=0.01)
    assert np.abs(np.diff(s.values)).max() < 1 / J
    L = form_l(s, SplineBasis(J))[1:, 1:]
    off = np.abs(np.triu(L, 2)).max()
    assert off == 0.0


def test_form_f_examples(tiny):
    b = SplineBasis(2)
    F = form_f(tiny, b, PiecewiseVol(2, np.array([1.0, 1.0]), np.array([True, True])))
    assert np.allclose(F, np.diag([3 / 8, 1 / 8]))
    s = random_sample(np.random.default_rng(1), 200)
    b = SplineBasis(6)
    F = form_f(s, b, PiecewiseVol(6, np.full(6, 2.0), np.ones(6, bool)))
    assert np.allclose(np.diag(F), empirical_measure(s).bin_masses(6))
    F = form_f(s, b, fz_symmetric(s, 6))
    assert np.all(F[~np.eye(6, dtype=bool)] == 0.0)


def test_offsets(tiny):
    m = empirical_measure(tiny)
    assert centered_offsets(m, SplineBasis(2))[0] == pytest.approx(0.325)
    s = random_sample(np.random.default_rng(2), 300)
    b = SplineBasis(7)
    m = empirical_measure(s)
    c = centered_offsets(m, b)
    assert np.all((c >= 0) & (c <= 1 / 7))
    centered = b.evaluate(s.values)[:, 1:] - c
    assert np.max(np.abs(m.weights @ centered)) < 1e-14


def _centered_gram(sample, J):
    b = SplineBasis(J)
    m = empirical_measure(sample)
    Z = b.evaluate(sample.values)[:, 1:] - centered_offsets(m, b)
    return Z.T @ (m.weights[:, None] * Z)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(3, 400), J=st.integers(2, 16))
def test_matrix_M_is_centered_gram(seed, n, J):
    s = random_sample(np.random.default_rng(seed), n)
    M = matrix_M(empirical_measure(s), SplineBasis(J))
    assert np.allclose(M, _centered_gram(s, J), atol=1e-10, rtol=0)
    assert np.allclose(M, build_forms(s, J, check=False).centered()[1], atol=1e-10, rtol=0)


def test_matrix_M_with_ties_and_knots():
    s = Sample(0.1, np.array([0.0, 0.25, 0.25, 0.5, 1.0, 0.75, 0.5]))
    assert np.allclose(matrix_M(empirical_measure(s), SplineBasis(4)), _centered_gram(s, 4), atol=1e-14)


def test_matrix_M_single_atom_and_positivity():
    s = Sample(0.1, np.full(5, 0.42))
    assert np.allclose(matrix_M(empirical_measure(s), SplineBasis(5)), 0.0)
    s = filled_sample(np.random.default_rng(6), 6, 400)
    assert np.all(matrix_M(empirical_measure(s), SplineBasis(6)) > 0)


def test_visit_counts():
    b = SplineBasis(10)
    sweep = Sample(0.01, fold(np.linspace(0, 2, 201)))
    assert np.all(visit_counts(sweep, b) >= 2)
    counts = visit_counts(Sample(0.1, np.full(5, 0.42)), b)
    assert np.count_nonzero(counts) == 1 and counts[4] == 5


def test_visit_counts_calibration():
    m = reference_model()
    full = 0
    for r in range(100):
        path = simulate_conditioned(m, 5.0, 1e-5, 0.2, rng=rng_stream(31, r))
        full += visit_counts(subsample(path, 1e-3), SplineBasis(9)).min() >= 2
    assert full >= 99


def test_centered_gram_spd_and_underfilled_flag():
    s = filled_sample(np.random.default_rng(7), 8, 300)
    f = build_forms(s, 8)
    assert not f.underfilled
    assert np.linalg.eigvalsh(f.centered()[1]).min() > 0
    f = build_forms(Sample(0.1, np.array([0.1, 0.15, 0.12, 0.9])), 4)
    assert f.underfilled
