"""Level-crossing statistics and the occupation-time gap for reflected Brownian motion.

Prints the mean unsigned crossing statistic, the RMS of the signed one and
the RMS occupation gap per observation step, with log-log slopes.  The
expected slopes are 1/2, 2/3 and 2/3.

    python3 demos/crossing_rates.py --replicates 50
"""

import argparse

from voldiff import diagnostics_sweep, reflected_bm


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--replicates", type=int, default=200)
    ap.add_argument("--alpha", type=float, nargs="+", default=[0.5])
    ap.add_argument("--jobs", type=int)
    args = ap.parse_args()

    deltas = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4]
    rows, slopes = diagnostics_sweep(reflected_bm(), args.alpha, deltas, replicates=args.replicates, jobs=args.jobs)
    print(f"{'alpha':>6s} {'delta':>8s} {'unsigned':>10s} {'signed rms':>11s} {'gap rms':>10s}")
    for r in rows:
        print(f"{r.alpha:6g} {r.delta:8g} {r.unsigned_mean:10.3e} {r.signed_rms:11.3e} {r.gap_rms:10.3e}")
    for alpha, fits in slopes.items():
        print(f"alpha={alpha:g}: " + ", ".join(f"{k} slope {f.slope:.3f}" for k, f in fits.items()))


if __name__ == "__main__":
    main()
