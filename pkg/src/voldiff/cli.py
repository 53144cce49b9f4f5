"""Command-line interface: ``voldiff {simulate,estimate,bench,diagnose,spectrum}``.

Exit codes: 0 success, 2 configuration error, 3 conditioning exhausted,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import bench
from .basis import build_forms
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
    QuadratureFailure,
    StepMismatch,
    TooFewObservations,
)
from .estimators import GHRFunction, fz_symmetric, spectral_averaged, spectrum
from .simulate import Sample, rng_stream, simulate_conditioned, subsample

log = logging.getLogger("voldiff")

EXIT_CONFIG, EXIT_CONDITIONING, EXIT_NUMERIC = 2, 3, 4
_NUMERIC = (
    AllMasked,
    DegenerateDesign,
    DegenerateSpectrum,
    NoConvergence,
    NotPositiveDefinite,
    QuadratureFailure,
    TooFewObservations,
)
_g = bench._g


def write_series(path, t, x):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "x"])
        wr.writerows(zip(map(_g, t), map(_g, x)))


def read_sample(path) -> Sample:
    """Read a ``(t, x)`` CSV; the step is taken from the time column."""
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read sample {path}: {exc}") from None
    if data.shape[0] < 3 or data.shape[1] != 2:
        raise ConfigError("sample CSV needs columns t,x and at least three rows")
    steps = np.diff(data[:, 0])
    delta = float(np.mean(steps))
    if not delta > 0 or np.max(np.abs(steps - delta)) > 1e-6 * delta:
        raise ConfigError("sample times are not equidistant")
    return Sample(delta, data[:, 1])


def write_matrix(path, A):
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows([[_g(v) for v in row] for row in np.atleast_2d(A)])


def write_spectrum(path, values):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["index", "eigenvalue"])
        wr.writerows((k, _g(v)) for k, v in enumerate(values))


def _config(args) -> bench.ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = bench.ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _sample(args):
    if args.sample:
        return read_sample(args.sample)
    cfg = _config(args)
    return bench.replicate_sample(cfg, args.point, args.replicate)


def _dump_forms(outdir, forms):
    for name in ("G", "L", "P"):
        write_matrix(os.path.join(outdir, f"forms_J{forms.J}_{name}.csv"), getattr(forms, name))


def cmd_simulate(args):
    cfg = _config(args)
    T, delta, dt = cfg.points()[args.point]
    rng = rng_stream(cfg.seed, args.point, args.replicate)
    try:
        path = simulate_conditioned(cfg.model, T, dt, cfg.v, cfg.n_bins, rng, cfg.max_tries)
    except ConditioningExhausted as exc:
        raise ConditioningExhausted(f"replicate {args.replicate}: {exc}", replicate=args.replicate) from None
    sample = subsample(path, delta)
    write_series(os.path.join(args.out, "sample.csv"), sample.times, sample.values)
    if not args.sample_only:
        write_series(os.path.join(args.out, "path.csv"), path.times, path.values)


def cmd_estimate(args):
    sample = _sample(args)
    J = args.J
    outdir = os.path.join(args.out, "estimates")
    os.makedirs(outdir, exist_ok=True)
    forms = build_forms(sample, J)
    if args.dump_forms:
        _dump_forms(args.out, forms)
    if args.dump_spectrum:
        write_spectrum(os.path.join(args.out, "spectrum.csv"), spectrum(forms))
    rows = []
    for name in args.estimators:
        if name == "fz":
            est = fz_symmetric(sample, J)
        else:
            pair = first_nontrivial_pair(forms)
            if name == "ghr":
                grid = np.linspace(0.0, 1.0, bench.EXPORT_GRID)
                v, d = GHRFunction(sample, J, forms, pair)(grid)
                rows += [(name, J, x, x, vi, di) for x, vi, di in zip(grid, v, d)]
                continue
            cap = args.threshold if name == "spectral_thresholded" else None
            if name == "spectral_thresholded" and cap is None:
                raise ConfigError("spectral_thresholded needs --threshold")
            est = spectral_averaged(sample, J, cap, forms, pair)[0]
        e = est.edges
        rows += [(name, J, lo, hi, v, d) for lo, hi, v, d in zip(e[:-1], e[1:], est.values, est.defined)]
    with open(os.path.join(outdir, "estimate.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["estimator", "J", "bin_left", "bin_right", "value", "defined"])
        for name, j, lo, hi, v, d in rows:
            wr.writerow([name, j, _g(lo), _g(hi), _g(v), int(bool(d))])


def cmd_bench(args):
    cfg = _config(args)
    if args.export is not None:
        cfg.export_estimates = args.export
    table = bench.mc_experiment(cfg, jobs=args.jobs)
    table.to_csv(os.path.join(args.out, "errors.csv"))
    if table.estimates:
        bench.write_estimates(table, os.path.join(args.out, "estimates"))
    if args.dump_forms or args.dump_spectrum:
        sample = bench.replicate_sample(cfg, 0, 0)
        for row in table.rows:
            if math_isclose(row.delta, sample.delta):
                forms = build_forms(sample, row.J_star)
                if args.dump_forms:
                    _dump_forms(args.out, forms)
                if args.dump_spectrum:
                    write_spectrum(os.path.join(args.out, f"spectrum_J{row.J_star}.csv"), spectrum(forms))
    for r in table.rows:
        print(f"T={r.T:g} delta={r.delta:g} {r.estimator:>20s} J*={r.J_star:3d} error={r.mean_error:.5f} +- {r.std_error:.5f}")


def math_isclose(a, b):
    return abs(a - b) <= 1e-12 * max(abs(a), abs(b))


def cmd_diagnose(args):
    if not args.config:
        raise ConfigError("--config is required")
    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    try:
        model = bench._model_from_spec(doc.get("model", {"preset": "reflected_bm"}))
    except (ModelError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid model: {exc}") from None
    diag = dict(doc.get("diagnostics", {}))
    unknown = set(diag) - {"alphas", "deltas", "T", "replicates", "dt_sub"}
    if unknown:
        raise ConfigError(f"unknown diagnostics keys {sorted(unknown)}")
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    try:
        rows, slopes = bench.diagnostics_sweep(
            model,
            diag.get("alphas", [0.5]),
            diag.get("deltas", [1e-2, 1e-3, 1e-4]),
            T=float(diag.get("T", 1.0)),
            replicates=int(diag.get("replicates", 200)),
            seed=seed,
            dt_sub=diag.get("dt_sub"),
            jobs=args.jobs,
        )
    except (ValueError, StepMismatch) as exc:
        raise ConfigError(str(exc)) from None
    bench.write_diagnostics(rows, slopes, os.path.join(args.out, "diagnostics.csv"))
    for alpha, fits in slopes.items():
        for stat, fit in fits.items():
            if fit is not None:
                print(f"alpha={alpha:g} {stat:>14s} slope={fit.slope:.3f} +- {fit.stderr:.3f}")


def cmd_spectrum(args):
    sample = _sample(args)
    forms = build_forms(sample, args.J)
    if args.dump_forms:
        _dump_forms(args.out, forms)
    write_spectrum(os.path.join(args.out, "spectrum.csv"), spectrum(forms))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="voldiff", description="Volatility estimation for reflected diffusions.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, sample=False):
        sp.add_argument("--config", help="experiment JSON")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--jobs", type=int, default=None, help="worker processes (default: $VOLDIFF_JOBS or 1)")
        sp.add_argument("--dump-forms", action="store_true", help="write G, L, P as CSV matrices")
        sp.add_argument("--dump-spectrum", action="store_true", help="write all eigenvalues as CSV")
        if sample:
            sp.add_argument("--sample", help="sample CSV (t,x); otherwise simulate from --config")
            sp.add_argument("--J", type=int, default=10, help="number of bins")
        sp.add_argument("--point", type=int, default=0, help="regime point index for simulated samples")
        sp.add_argument("--replicate", type=int, default=0, help="replicate index for simulated samples")

    s = sub.add_parser("simulate", help="simulate one conditioned path and its sample")
    common(s)
    s.add_argument("--sample-only", action="store_true", help="skip the fine path CSV")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("estimate", help="estimate the volatility from one sample")
    common(s, sample=True)
    s.add_argument("--estimators", nargs="+", default=["fz", "ghr", "spectral"], choices=bench.ESTIMATORS)
    s.add_argument("--threshold", type=float, help="cap for spectral_thresholded")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("bench", help="Monte Carlo error table")
    common(s)
    s.add_argument("--export", type=int, default=None, help="replicates whose estimates are written")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("diagnose", help="crossing and occupation-gap sweeps")
    common(s)
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("spectrum", help="all eigenvalues of the empirical pencil")
    common(s, sample=True)
    s.set_defaults(func=cmd_spectrum)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.jobs is None:
            args.jobs = bench.resolve_jobs(None)
        os.makedirs(args.out, exist_ok=True)
        args.func(args)
    except (ConfigError, ModelError, StepMismatch) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConditioningExhausted as exc:
        print(f"conditioning exhausted: {exc}", file=sys.stderr)
        return EXIT_CONDITIONING
    except _NUMERIC as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0
