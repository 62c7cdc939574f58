"""Randomized numerical certificates for the lemmas and theorems of the library.

Each ``verify_*`` function returns a :class:`VerificationReport`.  A report is
built from individual checks; every check carries a margin (slack for an
inequality, minus the error for an equality) and its own tolerance.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .bellman import ProjectedBellman, reset_mass
from .geometry import (affine_project, boundary_vector, build_geometry,
                       condition_analysis, condition_number, expectation_constant,
                       extension_offset,
                       loss_hat, loss_hat_gradient, loss_lambda, mass_matrix,
                       mixture_distance, project_masses, xi_norm_sq)
from .linear_fa import (affine_step, iterate_parameters, make_features,
                        mixture_gradients, parameter_operator, project_hat,
                        project_xi, step_metric, fixed_point_bound_terms, expectation_bound,
                        tightness_probe)
from .mdp import (random_mdp, reference_value_distribution, return_bounds,
                  stationary_distribution, value_function)

ABS_TOL = 1e-10
REL_TOL = 1e-8
CONVERGENCE_TOL = 1e-10
CONVERGENCE_BUDGET = 10_000
UNIQUENESS_TOL = 1e-6
TIGHTNESS_MIN = 0.999


@dataclass(frozen=True)
class Check:
    label: str
    margin: float
    tolerance: float
    kind: str = "inequality"      # or "equality"
    info: dict = field(default_factory=dict)

    @property
    def passed(self):
        if self.kind == "equality":
            return bool(-self.margin <= self.tolerance)
        return bool(self.margin >= -self.tolerance)

    def normalized(self):
        """Slack rescaled so that 0 is the pass threshold for every check."""
        if self.tolerance > 0:
            return self.margin / self.tolerance + 1.0
        return self.margin


@dataclass
class VerificationReport:
    name: str
    kind: str
    tolerance: float
    seeds: int
    worst_margin: float
    passed: bool
    details: list = field(default_factory=list)
    parts: dict = field(default_factory=dict)

    @classmethod
    def from_checks(cls, name, checks, seeds):
        """Aggregate checks in order; mixed tolerances switch to normalized slack."""
        if not checks:
            raise ValueError(f"{name}: no checks were run")
        kinds = {c.kind for c in checks}
        tols = {c.tolerance for c in checks}
        if len(kinds) == 1 and len(tols) == 1:
            kind, tol = kinds.pop(), tols.pop()
            worst = min(c.margin for c in checks)
        else:
            kind, tol = "normalized", 0.0
            worst = min(c.normalized() for c in checks)
        parts = {}
        for c in checks:
            part = c.label.split("/")[0]
            entry = parts.setdefault(part, {"passed": True, "checks": 0, "worst": np.inf})
            entry["passed"] &= c.passed
            entry["checks"] += 1
            entry["worst"] = min(entry["worst"], c.normalized())
        details = [{"label": c.label, "margin": c.margin, "tolerance": c.tolerance,
                    "kind": c.kind, "passed": c.passed, **c.info} for c in checks]
        return cls(name=name, kind=kind, tolerance=tol, seeds=int(seeds),
                   worst_margin=float(worst), passed=all(c.passed for c in checks),
                   details=details, parts=parts)

    def part_passed(self, part):
        return self.parts[part]["passed"]

    def to_dict(self):
        return _plain(asdict(self))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _rel(value, scale):
    return abs(value) / max(1.0, abs(scale))


# -- Lemma: condition numbers ------------------------------------------------------------

def verify_lemma_condition_number(ks=(3, 11, 21, 51), seeds=range(20), rel_tol=REL_TOL):
    """cond(C_lambda) is constant on the optimal interval and minimal among extensions."""
    checks = []
    seeds = list(seeds)
    for k in ks:
        ca = condition_analysis(k)
        g = build_geometry(k, 0.0)
        ee = mass_matrix(g)
        CCt = g.C @ g.C.T
        a_opt, _ = extension_offset(k, g.C0 + np.sqrt(ca.lambda_low * ca.lambda_high) * ee)
        info = {"k": k, "kappa_cc": ca.kappa_cc, "kappa_min": ca.kappa_min,
                "lambda_low": ca.lambda_low, "lambda_high": ca.lambda_high}
        for lam in (ca.lambda_low, ca.lambda_high):
            err = condition_number(g.C0 + lam * ee) / ca.kappa_min - 1
            checks.append(Check(f"interval/k={k}/endpoint", -abs(err), rel_tol, "equality",
                                {**info, "lam": lam}))
        for lam in (ca.lambda_low / 10, ca.lambda_high * 10):
            ratio = condition_number(g.C0 + lam * ee) / ca.kappa_min
            checks.append(Check(f"outside/k={k}", ratio - 1 - rel_tol, 0.0, "inequality",
                                {"k": k, "lam": lam, "ratio": ratio}))
        for s in seeds:
            rng = np.random.default_rng([k, s])
            lam = rng.uniform(ca.lambda_low, ca.lambda_high)
            err = condition_number(g.C0 + lam * ee) / ca.kappa_min - 1
            checks.append(Check(f"interval/k={k}/seed={s}", -abs(err), rel_tol, "equality",
                                {"k": k, "seed": s, "lam": lam}))
            # members CC^T + a e^T + e a^T: far ones with random a, near ones around the
            # offset that reproduces C_lambda; only positive-definite members compare
            for scale in (None, 1e-3, 1e-1):
                for _ in range(20):
                    if scale is None:
                        a = rng.normal(scale=rng.choice([0.1, 1.0, 10.0]) * np.sqrt(k), size=k)
                    else:
                        a = a_opt + scale * rng.normal(size=k)
                    M = CCt + np.outer(a, g.e) + np.outer(g.e, a)
                    if np.linalg.eigvalsh(M)[0] > 0:
                        ratio = condition_number(M) / ca.kappa_min
                        checks.append(Check(f"extension/k={k}/seed={s}", ratio - 1, rel_tol,
                                            "inequality", {"k": k, "seed": s, "ratio": ratio}))
                        break
    return VerificationReport.from_checks("lemma_condition_number", checks, len(seeds))


# -- Lemma: expectation preservation ----------------------------------------------------------

def _expectation_instance(rng, ks, lams):
    k = int(rng.choice(ks))
    lam = float(rng.choice(lams))
    g = build_geometry(k, lam)
    p = rng.normal(size=k)
    kind = rng.choice(["unit_mass", "random", "support"])
    if kind == "unit_mass":
        A, b = np.ones((1, k)), np.array([1.0])
    elif kind == "random":
        c = int(rng.integers(1, min(3, k - 1) + 1))
        A = rng.normal(size=(c, k))
        A[:, -1] = A[:, 0]
        b = rng.normal(size=c)
    else:
        # C51-style support constraints: zero out some interior atoms, fix unit mass
        c = int(rng.integers(1, k - 1))
        idx = rng.choice(np.arange(1, k - 1), size=c - 1, replace=False) if c > 1 else []
        A = np.zeros((c, k))
        A[0] = 1.0
        for row, i in enumerate(idx, start=1):
            A[row, i] = 1.0
        b = np.zeros(c)
        b[0] = 1.0
    return g, p, A, b, str(kind)


def verify_lemma_expectation(ks=(3, 11, 21, 51), seeds=range(1000), lams=(0.25, 1.0, 10.0),
                             rel_tol=REL_TOL):
    """Projections under constraints with equal first and last columns keep ``z^T p``."""
    checks = []
    seeds = list(seeds)
    for s in seeds:
        rng = np.random.default_rng([7, s])
        g, p, A, b, kind = _expectation_instance(rng, ks, lams)
        q = affine_project(g, p, A, b)
        before, after = g.atoms @ p, g.atoms @ q
        feas = np.max(np.abs(A @ q - b))
        checks.append(Check(f"preserved/{kind}/seed={s}", -_rel(after - before, before),
                            rel_tol, "equality", {"k": g.k, "lam": g.lam, "feasibility": feas}))
        checks.append(Check(f"feasible/{kind}/seed={s}", -_rel(feas, np.abs(b).max()),
                            rel_tol, "equality"))
    for k in ks:
        for lam in lams:
            g = build_geometry(k, lam)
            err = np.max(np.abs(g.C_lambda @ boundary_vector(k) - g.atoms))
            checks.append(Check(f"inverse_z/k={k}/lam={lam}", -err, rel_tol, "equality"))
            err = expectation_constant(g) - (k - 1)
            checks.append(Check(f"constant/k={k}/lam={lam}", -_rel(err, k), rel_tol, "equality"))
    # a single-atom constraint breaks the column symmetry and should move the mean
    shifts = []
    for s in seeds[:20] or [0]:
        rng = np.random.default_rng([8, s])
        k = int(rng.choice(ks))
        g = build_geometry(k, 1.0)
        p = rng.normal(size=k)
        A = np.zeros((1, k))
        A[0, 0] = 1.0
        q = affine_project(g, p, A, np.zeros(1))
        shifts.append(abs(g.atoms @ (q - p)))
    checks.append(Check("asymmetric_counterexample", max(shifts) - 1e-6, 0.0, "inequality",
                        {"largest_shift": max(shifts)}))
    return VerificationReport.from_checks("lemma_expectation", checks, len(seeds))


# -- Lemma: contraction of the projected operator ---------------------------------------------

def contraction_instance(seed, gamma, ns=(2, 5, 10, 20), ks=(3, 11, 21, 51), lam=1.0):
    """Random MDP, stationary xi and a Gaussian improper pair of tables."""
    rng = np.random.default_rng([11, seed, int(round(gamma * 1000))])
    n, k = int(rng.choice(ns)), int(rng.choice(ks))
    m = random_mdp(n, int(rng.integers(2**31)), gamma)
    g = build_geometry(k, lam, *return_bounds(m))
    xi = stationary_distribution(m)
    P, Q = rng.normal(size=(2, n, k))
    return m, g, xi, P, Q


def contraction_terms(m, g, xi, P, Q):
    """Both sides of the two squared-norm inequalities for ``D = P - Q``."""
    op = ProjectedBellman(m, g)
    D = P - Q
    TD = op(P) - op(Q)
    AAt = g.A @ g.A.T
    ee = mass_matrix(g)
    return {
        "aat_lhs": float(xi_norm_sq(xi, TD, AAt)),
        "aat_rhs": float(m.gamma * xi_norm_sq(xi, D, AAt)),
        "aat_base": float(xi_norm_sq(xi, D, AAt)),
        "mass_lhs": float(xi_norm_sq(xi, TD, ee)),
        "mass_rhs": float(xi_norm_sq(xi, D, ee)),
    }


def verify_lemma_contraction(gammas=(0.5, 0.9, 0.99), seeds=range(100), abs_tol=ABS_TOL):
    """``T'`` contracts the centered part by gamma and does not expand the mass part.

    Slack is measured relative to ``max(1, rhs)`` so that the tolerance stays
    meaningful for large ``k``.  The equal-mass specialization is reported as a
    separate part.
    """
    checks = []
    seeds = list(seeds)
    for gamma in gammas:
        best_ratio = 0.0
        for s in seeds:
            m, g, xi, P, Q = contraction_instance(s, gamma)
            t = contraction_terms(m, g, xi, P, Q)
            info = {"gamma": gamma, "seed": s, "n": m.n, "k": g.k}
            checks.append(Check(f"aat/gamma={gamma}/seed={s}",
                                (t["aat_rhs"] - t["aat_lhs"]) / max(1.0, t["aat_rhs"]),
                                abs_tol, "inequality", {**info, **t}))
            checks.append(Check(f"mass/gamma={gamma}/seed={s}",
                                (t["mass_rhs"] - t["mass_lhs"]) / max(1.0, t["mass_rhs"]),
                                abs_tol, "inequality", info))
            if t["aat_base"] > 0:
                best_ratio = max(best_ratio, t["aat_lhs"] / t["aat_base"])
            # equal-mass pair: shift Q so that every row carries the mass of P
            Qe = Q + (P.sum(axis=1) - Q.sum(axis=1))[:, None] / g.k
            op = ProjectedBellman(m, g)
            lhs = xi_norm_sq(xi, op(P) - op(Qe), g.C_lambda)
            rhs = gamma * xi_norm_sq(xi, P - Qe, g.C_lambda)
            checks.append(Check(f"equal_mass/gamma={gamma}/seed={s}",
                                (rhs - lhs) / max(1.0, rhs), abs_tol, "inequality", info))
        checks.append(Check(f"non_vacuity/gamma={gamma}", best_ratio - 0.5 * gamma, 0.0,
                            "inequality", {"best_ratio": best_ratio}))
    return VerificationReport.from_checks("lemma_contraction", checks, len(seeds))


# -- Theorem: convergence of the projected process -------------------------------------------

@dataclass(frozen=True)
class InstanceGrid:
    n: tuple = (2, 5, 10, 20)
    k: tuple = (3, 11, 21, 51)
    m: tuple = (1, 3, 5)
    gamma: tuple = (0.5, 0.9, 0.99)
    lam: tuple = (0.25, 1.0, 10.0)
    seeds: int = 20
    seed0: int = 0
    inits: int = 3
    lambda_zero: bool = True
    features: str = "random"


DEFAULT_GRID = InstanceGrid()


@dataclass
class FixedPointRecord:
    n: int
    k: int
    m: int
    gamma: float
    lam: float
    seed: int
    iterations: int
    final_step: float
    spread: float
    lhs: float
    rhs: float
    mass_term: float
    approx_error: float
    P_tilde: np.ndarray = field(repr=False)
    P_pi: np.ndarray = field(repr=False)
    V_pi: np.ndarray = field(repr=False)
    xi: np.ndarray = field(repr=False)
    center: float = 0.0
    spacing: float = 1.0

    def geometry(self):
        return build_geometry(self.k, self.lam, self.center - self.spacing * (self.k - 1) / 2,
                              self.center + self.spacing * (self.k - 1) / 2)

    def summary(self):
        return {key: getattr(self, key) for key in
                ("n", "k", "m", "gamma", "lam", "seed", "iterations", "final_step",
                 "spread", "lhs", "rhs", "mass_term", "approx_error")}


def _initial_parameters(seed, inits, m, k):
    rng = np.random.default_rng([23, seed])
    thetas = rng.normal(size=(inits, m, k))
    thetas[0] = 0.0
    return thetas


def _cell_fixed_points(n, k, gamma, ms, lams, seeds, inits, features, tol, budget):
    mdps = [random_mdp(n, s, gamma) for s in seeds]
    geos = [build_geometry(k, 1.0, *return_bounds(mdp)) for mdp in mdps]
    xis = [stationary_distribution(mdp) for mdp in mdps]
    P_pis = [reference_value_distribution(mdp, g, method="solve") for mdp, g in zip(mdps, geos)]
    V_pis = [value_function(mdp) for mdp in mdps]
    ops = [ProjectedBellman(mdp, g) for mdp, g in zip(mdps, geos)]
    records = []
    for m in ms:
        if m > n:
            continue
        Phis = [make_features(features, n, m, seed=10_000 + s) for s in seeds]
        grams = np.stack([Phi.T @ (xi[:, None] * Phi) for Phi, xi in zip(Phis, xis)])[:, None]
        theta0 = np.stack([_initial_parameters(s, inits, m, k) for s in seeds])
        for lam in lams:
            gl = [g.with_lambda(lam) for g in geos]
            ops_l = [parameter_operator(mdp, g, Phi, xi, bellman=op)
                     for mdp, g, Phi, xi, op in zip(mdps, gl, Phis, xis, ops)]
            L = np.stack([o[0] for o in ops_l])
            c = np.stack([o[1] for o in ops_l])[:, None]
            metric = step_metric(gl[0])
            Theta, iters, final, _ = iterate_parameters(
                affine_step(L, c), theta0, grams, metric, tol, budget)
            for i, s in enumerate(seeds):
                P_all = Phis[i] @ Theta[i]                      # (inits, n, k)
                ref = P_all[0]
                spread = max((float(xi_norm_sq(xis[i], P - ref, metric)) for P in P_all[1:]),
                             default=0.0)
                lhs, approx, mass = fixed_point_bound_terms(gl[i], xis[i], ref, P_pis[i], Phis[i])
                rhs = approx / (1 - gamma) - gamma * lam / (1 - gamma) * mass
                records.append(FixedPointRecord(
                    n=n, k=k, m=m, gamma=gamma, lam=lam, seed=s,
                    iterations=int(iters[i].max()), final_step=float(final[i].max()),
                    spread=spread, lhs=lhs, rhs=float(rhs), mass_term=mass,
                    approx_error=approx, P_tilde=ref, P_pi=P_pis[i], V_pi=V_pis[i],
                    xi=xis[i], center=geos[i].center, spacing=geos[i].spacing))
    return records


@lru_cache(maxsize=4)
def fixed_point_records(grid=DEFAULT_GRID, tol=CONVERGENCE_TOL, budget=CONVERGENCE_BUDGET):
    """Run the projected process on every grid cell; cached per grid."""
    lams = tuple(grid.lam) + ((0.0,) if grid.lambda_zero else ())
    seeds = list(range(grid.seed0, grid.seed0 + grid.seeds))
    records = []
    for n, k, gamma in itertools.product(grid.n, grid.k, grid.gamma):
        records.extend(_cell_fixed_points(n, k, gamma, grid.m, lams, seeds, grid.inits,
                                          grid.features, tol, budget))
    return tuple(records)


def verify_theorem_convergence(grid=DEFAULT_GRID, tol=CONVERGENCE_TOL,
                               budget=CONVERGENCE_BUDGET, bound_tol=REL_TOL):
    """Convergence, initialization independence and the fixed-point error bound.

    For lambda = 0 only the centered part of the limit is compared across
    initializations, and the bound is not evaluated.
    """
    checks = []
    for r in fixed_point_records(grid, tol, budget):
        tag = f"n={r.n}/k={r.k}/m={r.m}/gamma={r.gamma}/lam={r.lam}/seed={r.seed}"
        info = r.summary()
        checks.append(Check(f"converged/{tag}", tol - r.final_step, 0.0, "inequality", info))
        label = "unique" if r.lam > 0 else "centered_unique"
        checks.append(Check(f"{label}/{tag}", -r.spread, UNIQUENESS_TOL, "equality"))
        if r.lam > 0:
            checks.append(Check(f"bound/{tag}", r.rhs - r.lhs, bound_tol, "inequality"))
    return VerificationReport.from_checks("theorem_convergence", checks, grid.seeds)


def verify_theorem_expectation_bound(grid=DEFAULT_GRID, abs_tol=ABS_TOL, tol=CONVERGENCE_TOL,
                                     budget=CONVERGENCE_BUDGET):
    """Expected-value error bound on every fixed point, plus the collinear tightness probe."""
    checks = []
    for r in fixed_point_records(grid, tol, budget):
        if r.lam <= 0:
            continue
        g = r.geometry()
        tag = f"n={r.n}/k={r.k}/m={r.m}/gamma={r.gamma}/lam={r.lam}/seed={r.seed}"
        b = expectation_bound(g, r.xi, r.P_tilde, r.P_pi, r.V_pi)
        checks.append(Check(f"bound/{tag}", (b.rhs - b.lhs) / max(1.0, b.rhs), abs_tol,
                            "inequality", {"lhs": b.lhs, "rhs": b.rhs, "constant": b.constant}))
        zero = expectation_bound(g, r.xi, r.P_pi, r.P_pi, r.V_pi)
        checks.append(Check(f"zero/{tag}", zero.rhs - zero.lhs, abs_tol, "inequality"))
        probe = tightness_probe(g, r.xi, r.P_pi, r.V_pi)
        checks.append(Check(f"tight/{tag}", probe.ratio - TIGHTNESS_MIN, 0.0, "inequality",
                            {"ratio": probe.ratio}))
    return VerificationReport.from_checks("theorem_expectation_bound", checks, grid.seeds)


# -- projection identities ------------------------------------------------------------------

def random_mixture(rng, g, size=None):
    size = int(rng.integers(1, 12)) if size is None else size
    locs = rng.uniform(g.atoms[0] - 3, g.atoms[-1] + 3, size=size)
    masses = rng.normal(size=size)
    return locs, masses


def identity_errors(seed, ks=(3, 11, 21, 51), lams=(0.25, 1.0, 10.0)):
    """Relative errors of the Pythagorean, gradient-equivalence and reset identities."""
    rng = np.random.default_rng([31, seed])
    k, lam = int(rng.choice(ks)), float(rng.choice(lams))
    g = build_geometry(k, lam)
    locs, masses = random_mixture(rng, g)
    q = rng.normal(size=k)
    proj = project_masses(g, locs, masses)
    full = mixture_distance(g, locs, masses, g.atoms, q)
    split = mixture_distance(g, locs, masses, g.atoms, proj) + loss_lambda(g, proj, q)
    out = {"k": k, "lam": lam, "pythagoras": _rel(full - split, full)}

    M = rng.normal(size=(k, 3))
    theta = rng.normal(size=3)
    grads = mixture_gradients(g, locs, masses, M, theta)
    for kind in ("lambda", "hat"):
        a, b = grads[f"{kind}_mixture"], grads[f"{kind}_projected"]
        out[f"gradient_{kind}"] = float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(a))))

    n = int(rng.choice([2, 5, 10]))
    mm = int(rng.integers(1, n + 1))
    mdp = random_mdp(n, int(rng.integers(2**31)), float(rng.choice([0.5, 0.9, 0.99])))
    gm = build_geometry(k, lam, *return_bounds(mdp))
    xi = stationary_distribution(mdp)
    Phi = make_features("random", n, mm, seed=int(rng.integers(2**31)))
    P = rng.normal(size=(n, k))
    TP = ProjectedBellman(mdp, gm)(P)
    lhs = project_hat(gm, xi, Phi, TP)
    rhs = project_xi(gm, xi, Phi, reset_mass(gm, TP))
    out["reset_identity"] = float(np.max(np.abs(lhs - rhs)) / max(1.0, np.abs(rhs).max()))
    return out


def verify_projection_identities(seeds=range(100), rel_tol=REL_TOL):
    checks = []
    seeds = list(seeds)
    for s in seeds:
        errs = identity_errors(s)
        for key in ("pythagoras", "gradient_lambda", "gradient_hat", "reset_identity"):
            checks.append(Check(f"{key}/seed={s}", -errs[key], rel_tol, "equality",
                                {"k": errs["k"], "lam": errs["lam"]}))
    return VerificationReport.from_checks("projection_identities", checks, len(seeds))


def hat_gradient_fd_error(seed, ks=(3, 11, 21, 51), lams=(0.0, 0.25, 1.0, 10.0), h=1e-5):
    """Relative error between :func:`loss_hat_gradient` and central differences."""
    rng = np.random.default_rng([41, seed])
    g = build_geometry(int(rng.choice(ks)), float(rng.choice(lams)))
    p, q = rng.normal(size=(2, g.k))
    grad = loss_hat_gradient(g, p, q)
    fd = np.empty(g.k)
    for i in range(g.k):
        dq = np.zeros(g.k)
        dq[i] = h
        fd[i] = (loss_hat(g, p, q + dq) - loss_hat(g, p, q - dq)) / (2 * h)
    return float(np.max(np.abs(fd - grad)) / max(1.0, np.max(np.abs(grad))))


# -- suite ---------------------------------------------------------------------------------

CLAIMS = {
    "lemma_condition_number": verify_lemma_condition_number,
    "lemma_expectation": verify_lemma_expectation,
    "lemma_contraction": verify_lemma_contraction,
    "theorem_convergence": verify_theorem_convergence,
    "theorem_expectation_bound": verify_theorem_expectation_bound,
    "projection_identities": verify_projection_identities,
}


def run_claims(names=None, **overrides):
    """Run the named claims (all by default); ``overrides[name]`` holds keyword arguments."""
    names = list(CLAIMS) if names is None else list(names)
    unknown = [n for n in names if n not in CLAIMS]
    if unknown:
        raise KeyError(f"unknown claim(s): {', '.join(unknown)}")
    return [CLAIMS[n](**overrides.get(n, {})) for n in names]


SUMMARY_FIELDS = ("name", "kind", "tolerance", "seeds", "worst_margin", "passed")


def summary_csv(reports):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_FIELDS)
    for r in reports:
        writer.writerow([r.name, r.kind, repr(r.tolerance), r.seeds,
                         repr(r.worst_margin), int(r.passed)])
    return buf.getvalue()


def write_reports(reports, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for r in reports:
        (out / f"{r.name}.json").write_text(json.dumps(r.to_dict(), indent=1, sort_keys=True))
    (out / "summary.csv").write_text(summary_csv(reports))
    return out
