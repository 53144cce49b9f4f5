"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances.

The Monte Carlo criteria share two module-scoped experiments (high and low
frequency) so each path is simulated once.
"""

import math
import time

import numpy as np
import pytest

from conftest import random_sample
from voldiff import (
    ExperimentConfig,
    SplineBasis,
    build_forms,
    centered_offsets,
    diagnostics_sweep,
    empirical_measure,
    first_nontrivial_pair,
    form_f,
    fz_forward,
    fz_symmetric,
    invariant_density,
    matrix_M,
    mc_experiment,
    population_eigenpair,
    rate_regression,
    reference_model,
    reflected_bm,
    rng_stream,
    simulate_path,
    spectral_averaged,
    spectral_tilde,
    subsample,
)
from voldiff.errors import VolDiffError
from voldiff.model import constant

HALF_PI2 = math.pi**2 / 2
TOL = 1e-10

HF_DELTAS = [1e-3, 5e-4, 2e-4, 1e-4]
# default sub-step min(delta/100, 1e-3) except delta/20 at 1e-4
HF_DT_SUB = [1e-5, 5e-6, 2e-6, 5e-6]
LF_T = [1000, 3000, 7000]

PUBLISHED_HF = {"spectral": (0.0195, 0.0088), "fz": (0.0169, 0.0080), "ghr": (0.0388, 0.0220)}
PUBLISHED_LF = {"spectral": (0.0310, 0.0245), "ghr": (0.0386, 0.0333)}
PUBLISHED_LF_FZ = 0.082


def _extended_forms(s, J):
    """``G`` and ``P`` in extended precision from the float64 basis values."""
    n = len(s.values) - 1
    Psi = SplineBasis(J).evaluate(s.values).astype(np.longdouble)
    w = np.full(n + 1, 1 / np.longdouble(n))
    w[0] = w[-1] = w[0] / 2
    C = Psi[:-1].T @ Psi[1:] / n
    return Psi.T @ (w[:, None] * Psi), (C + C.T) / 2


def _rel(a, b):
    a, b = np.asarray(a, np.longdouble), np.asarray(b, np.longdouble)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-300)
    return float(np.max(np.abs(a - b), initial=0.0) / scale)


# criterion 1


def test_c1_algebraic_identities(verdict):
    rng = np.random.default_rng(20240601)
    worst = dict(GP=0.0, L=0.0, fz_sym=0.0, tilde=0.0, fz_rep=0.0, M=0.0)
    n_tilde = 0
    for _ in range(200):
        n, J = int(rng.integers(3, 501)), int(rng.integers(2, 17))
        s = random_sample(rng, n)
        f = build_forms(s, J, check=False)
        # G - P cancels to delta * L, so the right-hand side is formed in extended precision
        G, P = _extended_forms(s, J)
        worst["GP"] = max(worst["GP"], _rel(f.G, G), _rel(f.P, P))
        worst["L"] = max(worst["L"], _rel(f.L, (G - P) / np.longdouble(s.delta)))

        sym, fwd, rev = fz_symmetric(s, J), fz_forward(s, J), fz_forward(s.reversed(), J)
        d = sym.defined
        worst["fz_sym"] = max(worst["fz_sym"], _rel(sym.values[d], 0.5 * (fwd.values[d] + rev.values[d])))

        m = empirical_measure(s)
        masses = m.bin_masses(J)
        v = rng.choice([-1, 1], J) * rng.uniform(0.1, 2.0, J)
        F = form_f(s, SplineBasis(J), sym)
        ok = d & (masses > 0)
        worst["fz_rep"] = max(worst["fz_rep"], _rel(2 * (F @ v)[ok] / (v[ok] * masses[ok]), sym.values[ok]))

        b = SplineBasis(J)
        Z = b.evaluate(s.values)[:, 1:] - centered_offsets(m, b)
        worst["M"] = max(worst["M"], _rel(matrix_M(m, b), Z.T @ (m.weights[:, None] * Z)))

        try:
            pair = first_nontrivial_pair(f)
            est, inter = spectral_averaged(s, J, forms=f, pair=pair)
        except VolDiffError:
            continue
        if not inter.zeta_defined:
            continue
        t = spectral_tilde(s, J, forms=f, pair=pair)
        both = est.defined & t.defined
        worst["tilde"] = max(worst["tilde"], _rel(est.values[both], (-inter.zeta1 / inter.gamma1) * t.values[both]))
        n_tilde += 1
    ok = all(w <= TOL for w in worst.values()) and n_tilde > 0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    verdict("C1 algebraic identities", ok, f"max relative deviation {detail} (tilde identity on {n_tilde}/200 samples with a defined eigenpair)")
    assert ok


# criterion 2


def test_c2_analytic_eigenpair(verdict):
    start = time.perf_counter()
    m = reflected_bm()
    lam = population_eigenpair(constant(1.0), invariant_density(m), 40).value
    gammas = []
    for seed in range(20):
        s = subsample(simulate_path(m, 10.0, 1e-5, rng_stream(2000 + seed)), 1e-3)
        gammas.append(first_nontrivial_pair(build_forms(s, 10)).value)
    med = float(np.median(gammas))
    elapsed = time.perf_counter() - start
    ok = abs(lam / HALF_PI2 - 1) < 0.005 and abs(med / HALF_PI2 - 1) < 0.05 and elapsed < 30
    verdict(
        "C2 analytic eigenpair",
        ok,
        f"population {lam:.5f}, empirical median {med:.4f} vs pi^2/2 = {HALF_PI2:.4f} ({elapsed:.1f} s)",
    )
    assert ok


# shared Monte Carlo runs


@pytest.fixture(scope="module")
def hf_run():
    cfg = ExperimentConfig.from_dict(
        {
            "model": {"preset": "reference"},
            "regime": {"type": "high_frequency", "T": 5.0, "deltas": HF_DELTAS},
            "estimators": ["fz", "spectral", "ghr"],
            "J_grid": {"min": 4, "max": 30},
            "replicates": 100,
            "v": 0.2,
            "seed": 1,
            "dt_sub": HF_DT_SUB,
        }
    )
    start = time.perf_counter()
    table = mc_experiment(cfg)
    return table, time.perf_counter() - start


@pytest.fixture(scope="module")
def lf_run():
    cfg = ExperimentConfig.from_dict(
        {
            "model": {"preset": "reference"},
            "regime": {"type": "low_frequency", "delta": 0.25, "T_list": LF_T},
            "estimators": ["fz", "spectral", "ghr"],
            "J_grid": {"min": 4, "max": 30},
            "replicates": 100,
            "v": 0.2,
            "seed": 2,
        }
    )
    start = time.perf_counter()
    table = mc_experiment(cfg)
    return table, time.perf_counter() - start


def _fmt(row):
    return f"{row.mean_error:.4f}({row.std_error:.4f}) J*={row.J_star}"


# criterion 3


def test_c3_high_frequency_table(hf_run, verdict):
    table, elapsed = hf_run
    ok, parts = True, []
    for name, targets in PUBLISHED_HF.items():
        for delta, target in zip((1e-3, 1e-4), targets):
            row = table.lookup(name, delta=delta)
            good = abs(row.mean_error / target - 1) <= 0.35
            ok &= good
            parts.append(f"{name}@{delta:g} {_fmt(row)} vs {target}{'' if good else ' OUT'}")
    for delta in (1e-3, 1e-4):
        e = {n: table.lookup(n, delta=delta).mean_error for n in PUBLISHED_HF}
        order = e["ghr"] > e["spectral"] >= e["fz"]
        ok &= order
        parts.append(f"order@{delta:g} {'ok' if order else 'BROKEN'}")
    ok &= elapsed <= 15 * 60
    parts.append(f"{elapsed:.0f} s for all four deltas")
    verdict("C3 high-frequency table", ok, "; ".join(parts))
    assert ok


# criterion 4


def test_c4_low_frequency_table(lf_run, verdict):
    table, elapsed = lf_run
    ok, parts = True, []
    for name, targets in PUBLISHED_LF.items():
        for T, target in zip(LF_T[:2], targets):
            row = table.lookup(name, T=T)
            good = abs(row.mean_error / target - 1) <= 0.35
            ok &= good
            parts.append(f"{name}@T={T} {_fmt(row)} vs {target}{'' if good else ' OUT'}")
    fz = [table.lookup("fz", T=T) for T in LF_T[:2]]
    for T, row in zip(LF_T, fz):
        good = abs(row.mean_error / PUBLISHED_LF_FZ - 1) <= 0.25
        ok &= good
        parts.append(f"fz@T={T} {_fmt(row)} vs {PUBLISHED_LF_FZ}{'' if good else ' OUT'}")
    flat = abs(fz[1].mean_error - fz[0].mean_error) / fz[0].mean_error
    ok &= flat < 0.15
    parts.append(f"fz relative change {flat:.3f}")
    ok &= elapsed <= 10 * 60
    parts.append(f"{elapsed:.0f} s including T=7000")
    verdict("C4 low-frequency table", ok, "; ".join(parts))
    assert ok


# criterion 5


def test_c5_rates(hf_run, lf_run, verdict):
    hf, _ = hf_run
    lf, _ = lf_run
    ok, parts = True, []
    for name in ("spectral", "fz"):
        rows = [hf.lookup(name, delta=d) for d in HF_DELTAS[:3]]
        fit = rate_regression([(r.delta, r.mean_error) for r in rows], [r.std_error for r in rows])
        good = 0.18 <= fit.slope <= 0.48
        ok &= good
        parts.append(f"{name} vs delta {fit.slope:.3f}+-{fit.stderr:.3f}{'' if good else ' OUT'}")
    rows = [lf.lookup("spectral", T=T) for T in LF_T]
    fit = rate_regression([(r.T / r.delta, r.mean_error) for r in rows], [r.std_error for r in rows])
    good = -0.35 <= fit.slope <= -0.08
    ok &= good
    parts.append(f"spectral vs N {fit.slope:.3f}+-{fit.stderr:.3f}{'' if good else ' OUT'}")
    verdict("C5 rate checks", ok, "; ".join(parts))
    assert ok


# criterion 6


def test_c6_diagnostics_rates(verdict):
    rows, slopes = diagnostics_sweep(reflected_bm(), [0.5], [1e-2, 1e-3, 1e-4], T=1.0, replicates=200, seed=6)
    fits = slopes[0.5]
    bands = {"unsigned_mean": (0.35, 0.65), "signed_rms": (0.5, 0.85), "gap_rms": (0.5, 0.85)}
    ok, parts = True, []
    for stat, (lo, hi) in bands.items():
        fit = fits[stat]
        good = fit is not None and lo <= fit.slope <= hi
        ok &= good
        parts.append(f"{stat} {fit.slope:.3f}+-{fit.stderr:.3f} in [{lo}, {hi}]{'' if good else ' OUT'}")
    verdict("C6 diagnostics rates", ok, "; ".join(parts))
    assert ok


# criterion 7


def _occupation_ks(model, seed):
    path = simulate_path(model, 1e4, 1e-3, rng_stream(seed))
    # left-Riemann occupation measure of the fine path
    x = np.sort(path.values[:-1])
    mu = invariant_density(model)
    ecdf = np.searchsorted(x, mu.knots, side="right") / len(x)
    return float(np.max(np.abs(ecdf - mu.cdf)))


def test_c7_stationarity(verdict):
    ks = {"reference": _occupation_ks(reference_model(), 71), "reflected_bm": _occupation_ks(reflected_bm(), 72)}
    ok = all(v < 0.02 for v in ks.values())
    verdict("C7 stationarity", ok, ", ".join(f"{k} KS {v:.4f}" for k, v in ks.items()))
    assert ok
