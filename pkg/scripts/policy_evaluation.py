"""Projected fixed point against sampled semi-gradient updates on random chains.

For each MDP seed and feature count, prints the fixed-point error, both
sides of the fixed-point bound and the distance of the SGD iterate.
"""
import argparse

import numpy as np

from cramer_rl.geometry import build_geometry, xi_norm_sq
from cramer_rl.linear_fa import (StepSchedule, make_features, projected_process,
                                 sgd_policy_evaluation)
from cramer_rl.mdp import random_mdp, reference_value_distribution, return_bounds, stationary_distribution


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--k", type=int, default=11)
    ap.add_argument("--lam", type=float, default=1.0)
    ap.add_argument("--gamma", type=float, default=0.9)
    ap.add_argument("--ms", type=int, nargs="+", default=[1, 3, 5, 10])
    ap.add_argument("--features", default="random", choices=["random", "fourier"])
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--steps", type=int, default=100_000)
    ap.add_argument("--alpha0", type=float, default=0.06)
    args = ap.parse_args()

    print(f"{'seed':>4} {'m':>3} {'iters':>6} {'lhs':>10} {'rhs':>10} {'holds':>5} {'sgd dist':>10}")
    for seed in range(args.seeds):
        mdp = random_mdp(args.n, seed, args.gamma)
        g = build_geometry(args.k, args.lam, *return_bounds(mdp))
        xi = stationary_distribution(mdp)
        P_pi = reference_value_distribution(mdp, g, xi=xi)
        for m in args.ms:
            kind = "tabular" if m == args.n else args.features
            Phi = make_features(kind, args.n, m, seed=10_000 + seed)
            rep = projected_process(mdp, g, Phi, np.zeros((m, args.k)), xi=xi, P_pi=P_pi)
            # keep alpha * ||phi(x)||^2 at the tabular level so the updates stay stable
            alpha0 = args.alpha0 / np.max(np.sum(Phi ** 2, axis=1))
            Q = sgd_policy_evaluation(mdp, g, Phi, np.zeros((m, args.k)),
                                      StepSchedule(alpha0, 1000), args.steps, seed, xi=xi)
            dist = xi_norm_sq(xi, Q - rep.P_tilde, g.C_lambda)
            print(f"{seed:4d} {m:3d} {rep.iterations:6d} {rep.lhs_bound:10.3e} "
                  f"{rep.rhs_bound:10.3e} {str(rep.bound_holds):>5} {dist:10.3e}")


if __name__ == "__main__":
    main()
