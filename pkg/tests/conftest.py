import numpy as np
import pytest

from voldiff import Sample

_VERDICTS = []


def psi_scalar(j, J, x):
    """Independent scalar evaluation of the spline basis."""
    if j == 0:
        return 1.0
    lo = (j - 1) / J
    return min(max(x - lo, 0.0), 1.0 / J)


def brute_forms(values, delta, J):
    """Forms by direct triple loops over atoms and basis indices."""
    n = len(values) - 1
    w = [1.0 / n] * (n + 1)
    w[0] = w[-1] = 0.5 / n
    T = n * delta
    G = np.zeros((J + 1, J + 1))
    L = np.zeros_like(G)
    P = np.zeros_like(G)
    for i in range(J + 1):
        for j in range(J + 1):
            G[i, j] = sum(w[k] * psi_scalar(i, J, x) * psi_scalar(j, J, x) for k, x in enumerate(values))
            for k in range(n):
                a, b = values[k], values[k + 1]
                di = psi_scalar(i, J, b) - psi_scalar(i, J, a)
                dj = psi_scalar(j, J, b) - psi_scalar(j, J, a)
                L[i, j] += di * dj / (2 * T)
                P[i, j] += (psi_scalar(i, J, a) * psi_scalar(j, J, b) + psi_scalar(j, J, a) * psi_scalar(i, J, b)) / (2 * n)
    return G, L, P


def random_sample(rng, n, delta=None, step=None):
    """Reflected random walk sample with ``n`` increments."""
    delta = rng.uniform(1e-4, 0.5) if delta is None else delta
    step = rng.uniform(0.01, 0.3) if step is None else step
    y = rng.uniform() + np.cumsum(np.r_[0.0, step * rng.standard_normal(n)])
    r = np.mod(y, 2.0)
    return Sample(delta, np.where(r < 1.0, r, 2.0 - r))


def filled_sample(rng, J, n, delta=1e-3):
    """Random sample with at least two points in every one of ``J`` bins."""
    while True:
        s = random_sample(rng, n, delta)
        if np.bincount(np.minimum((s.values * J).astype(int), J - 1), minlength=J).min() >= 2:
            return s


@pytest.fixture
def tiny():
    return Sample(0.5, np.array([0.2, 0.3, 0.7]))


@pytest.fixture
def verdict():
    """Record a PASS/FAIL line for the terminal summary and print it."""

    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
