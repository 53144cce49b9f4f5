"""Oracle-J error table and empirical rates for the reference model.

    python3 demos/error_table.py demos/configs/high_frequency.json
    python3 demos/error_table.py demos/configs/low_frequency.json --replicates 20
"""

import argparse

from voldiff import ExperimentConfig, mc_experiment, rate_regression
from voldiff.errors import DegenerateDesign


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config")
    ap.add_argument("--replicates", type=int, help="override the replicate count")
    ap.add_argument("--jobs", type=int)
    args = ap.parse_args()

    cfg = ExperimentConfig.from_json(args.config)
    if args.replicates:
        cfg.replicates = args.replicates
    table = mc_experiment(cfg, jobs=args.jobs)

    high = cfg.regime["type"] == "high_frequency"
    print(f"{'estimator':>22s} {'T':>8s} {'delta':>8s} {'J*':>4s} {'error':>8s} {'se':>8s}")
    for r in table.rows:
        print(f"{r.estimator:>22s} {r.T:8g} {r.delta:8g} {r.J_star:4d} {r.mean_error:8.4f} {r.std_error:8.4f}")

    # log-log slope against delta (high frequency) or the sample size (low frequency)
    for name in cfg.estimators:
        rows = [r for r in table.rows if r.estimator == name]
        pts = [(r.delta if high else r.T / r.delta, r.mean_error) for r in rows]
        try:
            fit = rate_regression(pts, [r.std_error for r in rows])
        except DegenerateDesign:
            continue
        print(f"{name:>22s} slope vs {'delta' if high else 'N'}: {fit.slope:.3f} +- {fit.stderr:.3f}")


if __name__ == "__main__":
    main()
