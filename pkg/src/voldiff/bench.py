"""Monte Carlo experiments: error norms, oracle bandwidth, error tables and rates.

An experiment is described by a JSON document (see :class:`ExperimentConfig`).
Each regime point ``(T, delta)`` gets ``replicates`` independent conditioned
paths; replicate ``r`` of point ``i`` draws from the stream keyed by
``(seed, i, r)``, so results do not depend on the number of worker processes.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .basis import build_forms, gauss_rule
from .eigen import first_nontrivial_pair
from .errors import (
    AllMasked,
    ConditioningExhausted,
    ConfigError,
    DegenerateDesign,
    DegenerateSpectrum,
    ModelError,
    NoConvergence,
    NotPositiveDefinite,
)
from .estimators import GHRFunction, crossing_stat, fz_symmetric, occupation_riemann_gap, spectral_averaged
from .model import DiffusionModel, reference_model, reflected_bm
from .simulate import default_substep, rng_stream, simulate_conditioned, simulate_path, subsample

log = logging.getLogger(__name__)

ESTIMATORS = ("fz", "ghr", "spectral", "spectral_thresholded")
NODES_PER_PIECE = 64
EXPORT_GRID = 201

_NUMERIC = (NotPositiveDefinite, DegenerateSpectrum, NoConvergence, AllMasked)


class NormResult(NamedTuple):
    error: float
    masked_measure: float
    n_masked_bins: int


def _pieces(a, b, edges):
    inner = [e for e in edges if a < e < b] if edges is not None else list(np.linspace(a, b, 17)[1:-1])
    return np.array([a, *inner, b])


def error_norm(est, truth, a: float = 0.1, b: float = 0.9, p: int = 1) -> NormResult:
    """``L^p([a, b])`` distance between an estimate and the true coefficient.

    ``[a, b]`` is split at the estimate's bin edges and each piece integrated
    with 64-point Gauss-Legendre.  Masked regions are left out of the integral
    and their total length is reported.

    Parameters
    ----------
    est : PiecewiseVol, GHRFunction or callable
        Anything with ``evaluate(x) -> (values, defined)``; a plain callable
        is treated as defined wherever it is finite.
    truth : callable
        The true squared volatility.
    p : {1, 2}
    """
    if not a < b:
        raise ValueError("need a < b")
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    edges = getattr(est, "edges", None)
    cuts = _pieces(a, b, edges)
    x, w = gauss_rule(NODES_PER_PIECE)
    lo, hi = cuts[:-1, None], cuts[1:, None]
    nodes = (lo + 0.5 * (hi - lo) * (x + 1.0)).ravel()
    weights = (0.5 * (hi - lo) * w).ravel()
    if hasattr(est, "evaluate"):
        values, defined = est.evaluate(nodes)
    else:
        values = np.asarray(est(nodes), dtype=float)
        defined = np.isfinite(values)
    defined = np.asarray(defined, dtype=bool)
    if not defined.any():
        raise AllMasked("estimate is masked on the whole interval")
    diff = np.abs(np.where(defined, values, 0.0) - truth(nodes)) ** p
    total = float(np.sum(weights * diff * defined))
    masked = float(np.sum(weights[~defined]))
    piece_masked = (~defined).reshape(len(cuts) - 1, -1).any(axis=1)
    if edges is not None:
        mids = 0.5 * (cuts[:-1] + cuts[1:])
        n_bins = int(np.unique(np.searchsorted(edges, mids[piece_masked]) - 1).size)
    else:
        n_bins = int(piece_masked.sum())
    return NormResult(total ** (1.0 / p), masked, n_bins)


def select_oracle(risks, J_grid):
    """Index of the grid value minimizing the mean risk over replicates (ties to smaller J).

    ``risks`` has shape ``(replicates, len(J_grid))``; non-finite entries
    count as infinite risk.
    """
    r = np.where(np.isfinite(risks), risks, np.inf)
    mean = r.mean(axis=0)
    k = int(np.argmin(mean))
    assert np.all(mean[k] <= mean)
    return k, mean


def estimate_risks(sample, truth, J_grid, estimators, a=0.1, b=0.9, p=1, threshold=None, keep=False):
    """Error of each estimator at each ``J``; failures give ``inf``.

    Returns ``(risks, full, masked, estimates)`` with ``risks[e, k]`` the error of
    ``estimators[e]`` at ``J_grid[k]`` on ``[a, b]``.  ``full`` holds the
    same errors over ``[0, 1]``; ``estimates`` is filled only when ``keep``
    is true.
    """
    risks = np.full((len(estimators), len(J_grid)), np.inf)
    full = np.full_like(risks, np.inf)
    masked = np.zeros((len(estimators), len(J_grid)), dtype=np.int64)
    estimates = {}
    need_pair = any(e != "fz" for e in estimators)
    grid = np.linspace(0.0, 1.0, EXPORT_GRID)
    for k, J in enumerate(J_grid):
        forms = pair = None
        if need_pair:
            try:
                forms = build_forms(sample, J)
                pair = first_nontrivial_pair(forms)
            except _NUMERIC as exc:
                log.debug("J=%d: eigenpair failed (%s)", J, exc)
        for e, name in enumerate(estimators):
            try:
                if name == "fz":
                    est = fz_symmetric(sample, J)
                elif pair is None:
                    continue
                elif name == "ghr":
                    est = GHRFunction(sample, J, forms, pair)
                elif name == "spectral":
                    est = spectral_averaged(sample, J, forms=forms, pair=pair)[0]
                else:
                    est = spectral_averaged(sample, J, threshold=threshold, forms=forms, pair=pair)[0]
                res = error_norm(est, truth, a, b, p)
            except _NUMERIC as exc:
                log.debug("J=%d %s failed (%s)", J, name, exc)
                continue
            risks[e, k] = res.error
            full[e, k] = error_norm(est, truth, 0.0, 1.0, p).error
            masked[e, k] = res.n_masked_bins
            if keep:
                if name == "ghr":
                    v, d = est(grid)
                    estimates[name, J] = (grid, grid, v, d)
                else:
                    edges = est.edges
                    estimates[name, J] = (edges[:-1], edges[1:], est.values, est.defined)
    return risks, full, masked, estimates


def oracle_J(samples, truth, J_grid, estimator: str, a=0.1, b=0.9, p=1, threshold=None):
    """Oracle bandwidth over ``J_grid`` for one estimator and a set of samples.

    Returns ``(J_star, mean_error_at_J_star)``.
    """
    if not len(J_grid):
        raise ValueError("J_grid is empty")
    if not isinstance(samples, (list, tuple)):
        samples = [samples]
    risks = np.vstack([estimate_risks(s, truth, J_grid, [estimator], a, b, p, threshold)[0] for s in samples])
    k, mean = select_oracle(risks, J_grid)
    return J_grid[k], float(mean[k])


# -- configuration -----------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Monte Carlo experiment description.

    ``regime`` is either ``{"type": "high_frequency", "T": ..., "deltas": [...]}``
    or ``{"type": "low_frequency", "delta": ..., "T_list": [...]}``.
    ``dt_sub`` may be ``None`` (``min(delta/100, 0.001)``), a number, or one
    value per regime point.
    """

    model: DiffusionModel
    regime: dict
    estimators: list = field(default_factory=lambda: ["fz", "ghr", "spectral"])
    J_grid: list = field(default_factory=lambda: list(range(4, 31)))
    replicates: int = 100
    v: float = 0.2
    interval: tuple = (0.1, 0.9)
    seed: int = 0
    dt_sub: object = None
    n_bins: int = 50
    max_tries: int = 200
    p: int = 1
    threshold: float | None = None
    export_estimates: int = 0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        kind = self.regime.get("type")
        if kind == "high_frequency":
            if "T" not in self.regime or not self.regime.get("deltas"):
                raise ConfigError("high_frequency regime needs T and deltas")
        elif kind == "low_frequency":
            if "delta" not in self.regime or not self.regime.get("T_list"):
                raise ConfigError("low_frequency regime needs delta and T_list")
        else:
            raise ConfigError(f"unknown regime type {kind!r}")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise ConfigError(f"unknown estimators {bad}")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not self.J_grid or min(self.J_grid) < 2:
            raise ConfigError("J_grid must be nonempty with J >= 2")
        a, b = self.interval
        if not 0 <= a < b <= 1:
            raise ConfigError("interval must satisfy 0 <= a < b <= 1")
        if self.p not in (1, 2):
            raise ConfigError("p must be 1 or 2")
        if isinstance(self.dt_sub, (list, tuple)) and len(self.dt_sub) != len(self.points_raw()):
            raise ConfigError("dt_sub list must have one entry per regime point")
        for T, delta, dt in self.points():
            step = round(delta / dt)
            if step < 1 or abs(step * dt - delta) > 1e-9 * delta:
                raise ConfigError(f"delta={delta} is not an integer multiple of dt_sub={dt}")
            if delta > T:
                raise ConfigError(f"delta={delta} exceeds T={T}")

    def points_raw(self):
        if self.regime["type"] == "high_frequency":
            return [(float(self.regime["T"]), float(d)) for d in self.regime["deltas"]]
        return [(float(T), float(self.regime["delta"])) for T in self.regime["T_list"]]

    def points(self):
        """``[(T, delta, dt_sub), ...]`` for every regime point."""
        out = []
        for i, (T, delta) in enumerate(self.points_raw()):
            dt = self.dt_sub
            if isinstance(dt, (list, tuple)):
                dt = dt[i]
            out.append((T, delta, default_substep(delta) if dt is None else float(dt)))
        return out

    @property
    def cap(self) -> float:
        return self.model.D if self.threshold is None else float(self.threshold)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        try:
            model = _model_from_spec(doc.pop("model"))
            regime = doc.pop("regime")
        except KeyError as exc:
            raise ConfigError(f"config is missing {exc}") from None
        except ModelError as exc:
            raise ConfigError(f"invalid model: {exc}") from None
        if isinstance(doc.get("J_grid"), dict):
            g = doc["J_grid"]
            doc["J_grid"] = list(range(int(g["min"]), int(g["max"]) + 1, int(g.get("step", 1))))
        if "master_seed" in doc:
            doc["seed"] = doc.pop("master_seed")
        if "a" in doc or "b" in doc:
            doc["interval"] = (doc.pop("a", 0.1), doc.pop("b", 0.9))
        if "interval" in doc:
            doc["interval"] = tuple(doc["interval"])
        known = set(cls.__dataclass_fields__) - {"model", "regime"}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        try:
            return cls(model=model, regime=dict(regime), **doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(doc)


def _model_from_spec(spec) -> DiffusionModel:
    if isinstance(spec, dict) and "preset" in spec:
        presets = {"reference": reference_model, "reflected_bm": reflected_bm}
        try:
            return presets[spec["preset"]]()
        except KeyError:
            raise ConfigError(f"unknown model preset {spec['preset']!r}") from None
    return DiffusionModel.from_dict(spec)


# -- experiments -------------------------------------------------------------


@dataclass
class ErrorRow:
    T: float
    delta: float
    estimator: str
    J_star: int
    mean_error: float
    std_error: float
    n_masked_bins: int
    full_error: float = math.nan
    n_failed: int = 0


@dataclass
class ErrorTable:
    """Rows of oracle-J errors per regime point and estimator.

    ``std_error`` is the sample standard deviation over replicates divided by
    the square root of their number, computed over the replicates that
    produced an estimate; ``n_failed`` counts the others (their risk is
    infinite, so ``mean_error`` is infinite whenever ``n_failed > 0``).
    """

    rows: list
    risks: dict = field(default_factory=dict, repr=False)
    J_grid: list = field(default_factory=list)
    estimates: dict = field(default_factory=dict, repr=False)

    def lookup(self, estimator, delta=None, T=None) -> ErrorRow:
        for r in self.rows:
            if r.estimator == estimator and (delta is None or math.isclose(r.delta, delta)) and (
                T is None or math.isclose(r.T, T)
            ):
                return r
        raise KeyError((estimator, delta, T))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["T", "delta", "estimator", "J_star", "mean_error", "std_error", "n_masked_bins", "full_error", "n_failed"])
            for r in self.rows:
                wr.writerow(
                    [_g(r.T), _g(r.delta), r.estimator, r.J_star, _g(r.mean_error), _g(r.std_error), r.n_masked_bins, _g(r.full_error), r.n_failed]
                )


def _g(x) -> str:
    return format(float(x), ".17g")


def replicate_sample(config: ExperimentConfig, point: int, rep: int):
    """Regenerate the conditioned sample of one replicate."""
    T, delta, dt = config.points()[point]
    rng = rng_stream(config.seed, point, rep)
    try:
        path = simulate_conditioned(config.model, T, dt, config.v, config.n_bins, rng, config.max_tries)
    except ConditioningExhausted as exc:
        raise ConditioningExhausted(f"point {point} replicate {rep}: {exc}", replicate=rep) from None
    return subsample(path, delta)


def _run_replicate(args):
    config, point, rep = args
    sample = replicate_sample(config, point, rep)
    a, b = config.interval
    keep = rep < config.export_estimates
    return estimate_risks(
        sample, config.model.sigma2, config.J_grid, config.estimators, a, b, config.p, config.cap, keep
    )


def resolve_jobs(jobs=None) -> int:
    if jobs is None:
        jobs = os.environ.get("VOLDIFF_JOBS", 1)
    try:
        jobs = int(jobs)
    except ValueError:
        raise ConfigError(f"invalid job count {jobs!r}") from None
    return max(jobs, 1)


def _map(fn, tasks, jobs):
    if jobs == 1 or len(tasks) == 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def mc_experiment(config: ExperimentConfig, jobs=None) -> ErrorTable:
    """Simulate, estimate over ``J_grid``, oracle-select and aggregate every regime point."""
    jobs = resolve_jobs(jobs)
    points = config.points()
    tasks = [(config, i, r) for i in range(len(points)) for r in range(config.replicates)]
    results = _map(_run_replicate, tasks, jobs)
    table = ErrorTable(rows=[], J_grid=list(config.J_grid))
    R = config.replicates
    for i, (T, delta, _) in enumerate(points):
        chunk = results[i * R : (i + 1) * R]
        risks = np.stack([c[0] for c in chunk])  # (R, n_est, n_J)
        full = np.stack([c[1] for c in chunk])
        masked = np.stack([c[2] for c in chunk])
        for e, name in enumerate(config.estimators):
            k, mean = select_oracle(risks[:, e, :], config.J_grid)
            col = risks[:, e, k]
            finite = np.isfinite(col)
            se = float(np.std(col[finite], ddof=1) / math.sqrt(finite.sum())) if finite.sum() > 1 else 0.0
            table.rows.append(
                ErrorRow(
                    T,
                    delta,
                    name,
                    int(config.J_grid[k]),
                    float(mean[k]),
                    se,
                    int(masked[:, e, k].sum()),
                    float(np.mean(full[:, e, k])),
                    int(np.sum(~finite)),
                )
            )
            table.risks[name, i] = risks[:, e, :]
            for rep, c in enumerate(chunk):
                est = c[3].get((name, config.J_grid[k]))
                if est is not None:
                    table.estimates[i, rep, name] = (config.J_grid[k], *est)
    return table


def write_estimates(table: ErrorTable, outdir):
    """One CSV per exported replicate with the oracle-J estimates of every estimator."""
    os.makedirs(outdir, exist_ok=True)
    by_rep = {}
    for (point, rep, name), data in table.estimates.items():
        by_rep.setdefault((point, rep), []).append((name, data))
    for (point, rep), items in sorted(by_rep.items()):
        with open(os.path.join(outdir, f"p{point}_r{rep:04d}.csv"), "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["estimator", "J", "bin_left", "bin_right", "value", "defined"])
            for name, (J, left, right, values, defined) in items:
                for lo, hi, v, d in zip(left, right, values, defined):
                    wr.writerow([name, J, _g(lo), _g(hi), _g(v), int(bool(d))])


class RateFit(NamedTuple):
    slope: float
    stderr: float
    intercept: float


def rate_regression(points, errors=None) -> RateFit:
    """Least-squares slope of ``log(error)`` on ``log(scale)``.

    Parameters
    ----------
    points : sequence of (scale, error)
    errors : sequence of float, optional
        Standard errors of the errors.  When given, ``stderr`` is the slope
        uncertainty propagated from them (delta method); otherwise it is the
        residual-based standard error.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise DegenerateDesign("need at least three (scale, error) points")
    if np.any(pts <= 0):
        raise DegenerateDesign("scales and errors must be positive")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    xc = x - x.mean()
    sxx = float(np.dot(xc, xc))
    if sxx <= 1e-300:
        raise DegenerateDesign("all scales are equal")
    slope = float(np.dot(xc, y) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    if errors is not None:
        sig = np.asarray(errors, dtype=float) / pts[:, 1]
        stderr = float(math.sqrt(np.sum((xc / sxx) ** 2 * sig**2)))
    elif len(x) > 2:
        resid = y - intercept - slope * x
        stderr = float(math.sqrt(np.dot(resid, resid) / (len(x) - 2) / sxx))
    else:
        stderr = 0.0
    return RateFit(slope, stderr, intercept)


# -- diagnostics -------------------------------------------------------------


@dataclass
class DiagnosticsRow:
    alpha: float
    delta: float
    unsigned_mean: float
    signed_rms: float
    gap_rms: float
    unsigned_se: float = 0.0
    signed_se: float = 0.0
    gap_se: float = 0.0


def _diag_replicate(args):
    model, T, deltas, dt_subs, alphas, seed, rep, x0 = args
    out = np.zeros((len(deltas), len(alphas), 3))
    for i, (delta, dt) in enumerate(zip(deltas, dt_subs)):
        path = simulate_path(model, T, dt, rng_stream(seed, 1000 + i, rep), x0)
        sample = subsample(path, delta)
        for k, alpha in enumerate(alphas):
            u, s = crossing_stat(sample, alpha)
            out[i, k] = u, s, occupation_riemann_gap(path, sample, alpha)
    return out


def _rms_se(x):
    # delta-method standard error of sqrt(mean(x^2))
    m2 = np.mean(x**2)
    if m2 == 0:
        return 0.0
    return float(np.std(x**2, ddof=1) / math.sqrt(len(x)) / (2.0 * math.sqrt(m2)))


def diagnostics_sweep(
    model: DiffusionModel,
    alphas,
    deltas,
    T: float = 1.0,
    replicates: int = 200,
    seed: int = 0,
    dt_sub=None,
    jobs=None,
    x0=None,
):
    """Crossing statistics and occupation-gap RMS over an ``(alpha, delta)`` grid.

    Returns ``(rows, slopes)`` where ``slopes[alpha]`` maps each statistic to
    its :class:`RateFit` against ``delta`` (``None`` when fewer than three
    positive points exist).  Paths start from the invariant law unless
    ``x0`` is given.
    """
    jobs = resolve_jobs(jobs)
    deltas = [float(d) for d in deltas]
    if dt_sub is None:
        dt_subs = [d / 100.0 for d in deltas]
    elif isinstance(dt_sub, (list, tuple)):
        dt_subs = [float(x) for x in dt_sub]
    else:
        dt_subs = [float(dt_sub)] * len(deltas)
    tasks = [(model, T, deltas, dt_subs, list(alphas), seed, r, x0) for r in range(replicates)]
    stats = np.stack(_map(_diag_replicate, tasks, jobs))  # (R, n_delta, n_alpha, 3)
    rows, slopes = [], {}
    for k, alpha in enumerate(alphas):
        for i, delta in enumerate(deltas):
            s = stats[:, i, k]
            rows.append(
                DiagnosticsRow(
                    alpha,
                    delta,
                    float(s[:, 0].mean()),
                    float(np.sqrt(np.mean(s[:, 1] ** 2))),
                    float(np.sqrt(np.mean(s[:, 2] ** 2))),
                    float(s[:, 0].std(ddof=1) / math.sqrt(replicates)) if replicates > 1 else 0.0,
                    _rms_se(s[:, 1]) if replicates > 1 else 0.0,
                    _rms_se(s[:, 2]) if replicates > 1 else 0.0,
                )
            )
        mine = [r for r in rows if r.alpha == alpha]
        slopes[alpha] = {}
        for stat, se in (("unsigned_mean", "unsigned_se"), ("signed_rms", "signed_se"), ("gap_rms", "gap_se")):
            pts = [(r.delta, getattr(r, stat)) for r in mine]
            if len(pts) >= 3 and all(v > 0 for _, v in pts):
                slopes[alpha][stat] = rate_regression(pts, [getattr(r, se) for r in mine])
            else:
                slopes[alpha][stat] = None
    return rows, slopes


def write_diagnostics(rows, slopes, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["alpha", "delta", "unsigned_mean", "signed_rms", "gap_rms", "unsigned_se", "signed_se", "gap_se"])
        for r in rows:
            wr.writerow(
                [_g(r.alpha), _g(r.delta)]
                + [_g(getattr(r, k)) for k in ("unsigned_mean", "signed_rms", "gap_rms", "unsigned_se", "signed_se", "gap_se")]
            )
        for alpha, fits in slopes.items():
            for stat, fit in fits.items():
                if fit is not None:
                    wr.writerow([_g(alpha), "slope", stat, _g(fit.slope), _g(fit.stderr), "", "", ""])
