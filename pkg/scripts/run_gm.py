"""Gaussian-mixture comparison: test log density and MSE by weighting method.

    python3 scripts/run_gm.py --n 200 --reps 100 --out results/gm
    python3 scripts/run_gm.py --n 15 --reps 20 --duplicates 10 --out results/gm_dup
"""

import argparse
import time

from predstack.simlab import GmConfig, compare, run_gm_experiment, write_report
from predstack.simlab.gm import GM_METHODS


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, nargs="+", default=[200])
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--duplicates", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="results/gm")
    args = p.parse_args()

    for n in args.n:
        cfg = GmConfig(n=n, reps=args.reps, duplicates_of_4=args.duplicates, seed=args.seed)
        t0 = time.perf_counter()
        report = run_gm_experiment(cfg, threads=args.threads)
        write_report(report, args.out, stem=f"gm_n{n}")
        print(f"n={n}  reps={args.reps}  ({time.perf_counter() - t0:.1f} s)")
        print(f"  {'method':18s} {'test lpd':>10s} {'se':>8s} {'mse':>8s} {'se':>8s}")
        for m in GM_METHODS:
            s = report["summary"][m]
            print(f"  {m:18s} {s['test_lpd_mean']:10.4f} {s['test_lpd_se']:8.4f} "
                  f"{s['mse_mean']:8.4f} {s['mse_se']:8.4f}")
        for other in ("bma", "stack-means"):
            c = compare(report, "stacking", other)
            print(f"  stacking - {other}: {c['diff']:.4f} (se {c['se']:.4f}, paired {c['paired_se']:.4f})")
        if args.duplicates:
            print(f"  {'copies':>6s} {'bma mass':>9s} {'stack mass':>10s} {'max drift':>10s}")
            for m, row in report["duplicates"]["by_copies"].items():
                print(f"  {m:>6s} {row['bma_group_mass']:9.4f} {row['stacking_group_mass']:10.4f} "
                      f"{row['max_stacking_drift']:10.2e}")


if __name__ == "__main__":
    main()
