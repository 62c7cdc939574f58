"""Condition numbers of CC^T and C_lambda across resolutions, plus a lambda sweep.

    python3 scripts/condition_constants.py --ks 3 11 21 51 --sweep sweep.csv
"""
import argparse
import csv

import numpy as np

from cramer_rl.geometry import build_geometry, condition_analysis, condition_number, mass_matrix


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ks", type=int, nargs="+", default=[3, 11, 21, 51])
    ap.add_argument("--sweep", help="write cond(C_lambda) against lambda for the largest k")
    args = ap.parse_args()

    print(f"{'k':>4} {'cond(CC^T)':>12} {'kappa_min':>10} {'lambda_low':>11} {'lambda_high':>12}")
    for k in args.ks:
        ca = condition_analysis(k)
        print(f"{k:4d} {ca.kappa_cc:12.2f} {ca.kappa_min:10.2f} "
              f"{ca.lambda_low:11.4f} {ca.lambda_high:12.3f}")

    if args.sweep:
        k = max(args.ks)
        g = build_geometry(k, 0.0)
        ee = mass_matrix(g)
        with open(args.sweep, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lambda", "cond"])
            for lam in np.logspace(-3, 4, 71):
                w.writerow([f"{lam:.6g}", f"{condition_number(g.C0 + lam * ee):.6g}"])
        print(f"sweep for k={k} written to {args.sweep}")


if __name__ == "__main__":
    main()
