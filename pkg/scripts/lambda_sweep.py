"""Fixed-point error and expected-value error as lambda varies.

The fixed point of the penalized process does not depend on lambda > 0; both
sides of the bound still move because the metric C_lambda does.  Without the
all-ones vector in the feature span the bound can fail (try --gamma 0.5).
"""
import argparse

import numpy as np

from cramer_rl.geometry import build_geometry
from cramer_rl.linear_fa import make_features, projected_process, expectation_bound
from cramer_rl.mdp import (random_mdp, reference_value_distribution, return_bounds,
                           stationary_distribution, value_function)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--k", type=int, default=21)
    ap.add_argument("--m", type=int, default=3)
    ap.add_argument("--gamma", type=float, default=0.9)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lams", type=float, nargs="+", default=[0.0, 0.25, 1.0, 10.0, 100.0])
    ap.add_argument("--constant-feature", action="store_true",
                    help="put the all-ones vector in the feature span")
    args = ap.parse_args()

    mdp = random_mdp(args.n, args.seed, args.gamma)
    xi = stationary_distribution(mdp)
    V = value_function(mdp)
    Phi = make_features("random", args.n, args.m, seed=10_000 + args.seed)
    if args.constant_feature:
        Phi[:, 0] = 1.0
    base = build_geometry(args.k, 1.0, *return_bounds(mdp))
    P_pi = reference_value_distribution(mdp, base, xi=xi)
    print(f"{'lambda':>8} {'lhs':>10} {'rhs':>10} {'mass':>10} {'E-err':>10} {'E-bound':>10}")
    for lam in args.lams:
        g = base.with_lambda(lam)
        rep = projected_process(mdp, g, Phi, np.zeros((args.m, args.k)), xi=xi, P_pi=P_pi)
        if lam > 0:
            b = expectation_bound(g, xi, rep.P_tilde, P_pi, V)
            tail = f"{b.lhs:10.3e} {b.rhs:10.3e}"
        else:
            tail = f"{'-':>10} {'-':>10}"
        print(f"{lam:8.2f} {rep.lhs_bound:10.3e} {rep.rhs_bound:10.3e} "
              f"{rep.mass_term:10.3e} {tail}")


if __name__ == "__main__":
    main()
