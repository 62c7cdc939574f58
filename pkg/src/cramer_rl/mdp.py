"""Finite Markov reward processes for policy evaluation."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, SupportTooNarrowError
from .geometry import xi_norm_sq

ERGODIC_MIX = 1e-3
REWARD_LATTICE = np.linspace(-1.0, 1.0, 5)


@dataclass(frozen=True, eq=False)
class FiniteMDP:
    """Policy-collapsed chain: transitions ``P`` (n x n), per-state reward laws, ``gamma``.

    ``rewards[x]`` is a pair ``(values, probs)`` of equal-length arrays.
    """

    P: np.ndarray
    rewards: tuple
    gamma: float

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
            raise ValueError(f"P must be a nonempty square matrix, got shape {P.shape}")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=1) - 1)) > 1e-12:
            raise ValueError("rows of P must be nonnegative and sum to 1")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if len(self.rewards) != P.shape[0]:
            raise ValueError("need one reward distribution per state")
        rewards = []
        for values, probs in self.rewards:
            values = np.array(values, dtype=float).ravel()
            probs = np.array(probs, dtype=float).ravel()
            if values.size == 0 or values.shape != probs.shape:
                raise ValueError("reward values and probabilities must be nonempty and aligned")
            if np.any(probs < 0) or abs(probs.sum() - 1) > 1e-12:
                raise ValueError("reward probabilities must be nonnegative and sum to 1")
            if not np.all(np.isfinite(values)):
                raise ValueError("rewards must be bounded")
            values.setflags(write=False)
            probs.setflags(write=False)
            rewards.append((values, probs))
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "rewards", tuple(rewards))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n(self):
        return self.P.shape[0]

    @property
    def mean_rewards(self):
        return np.array([v @ w for v, w in self.rewards])

    @property
    def reward_bounds(self):
        lo = min(v.min() for v, _ in self.rewards)
        hi = max(v.max() for v, _ in self.rewards)
        return float(lo), float(hi)

    def to_dict(self):
        return {
            "n": self.n,
            "gamma": self.gamma,
            "p": self.P.tolist(),
            "rewards": [[[float(v), float(w)] for v, w in zip(vals, probs)]
                        for vals, probs in self.rewards],
        }

    @classmethod
    def from_dict(cls, doc):
        n = int(doc["n"])
        P = np.asarray(doc["p"], dtype=float).reshape(n, n)
        rewards = []
        for pairs in doc["rewards"]:
            pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
            rewards.append((pairs[:, 0], pairs[:, 1]))
        return cls(P=P, rewards=tuple(rewards), gamma=float(doc["gamma"]))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def deterministic_rewards(values):
    return tuple((np.array([r], dtype=float), np.array([1.0])) for r in values)


def mix_uniform(P, eps=ERGODIC_MIX):
    P = np.asarray(P, dtype=float)
    return (1 - eps) * P + eps / P.shape[0]


def random_mdp(n, seed, gamma=0.9, max_reward_atoms=3, eps=ERGODIC_MIX):
    """Dirichlet(1,...,1) transition rows mixed with an ``eps`` uniform kernel.

    Each state gets between one and ``max_reward_atoms`` reward values drawn
    from a lattice in ``[-1, 1]``.
    """
    rng = np.random.default_rng(seed)
    P = mix_uniform(rng.dirichlet(np.ones(n), size=n), eps)
    P /= P.sum(axis=1, keepdims=True)
    rewards = []
    for _ in range(n):
        count = int(rng.integers(1, max_reward_atoms + 1))
        values = rng.choice(REWARD_LATTICE, size=count, replace=False)
        probs = rng.dirichlet(np.ones(count))
        rewards.append((np.sort(values), probs[np.argsort(values)]))
    return FiniteMDP(P=P, rewards=tuple(rewards), gamma=gamma)


def stationary_distribution(m, tol=1e-12, max_iter=1_000_000):
    """Power iteration for ``xi^T P = xi^T``; stops once the sup-norm residual <= tol."""
    P = m.P
    xi = np.full(m.n, 1.0 / m.n)
    residual = np.inf
    for it in range(max_iter):
        nxt = xi @ P
        nxt /= nxt.sum()
        residual = np.max(np.abs(nxt @ P - nxt))
        xi = nxt
        if residual <= tol:
            return xi
    raise ConvergenceError(
        f"power iteration did not reach tol={tol} in {max_iter} steps (residual {residual:.3e})",
        residual=residual, iterations=max_iter)


def value_function(m):
    """``V = (I - gamma P)^{-1} rbar`` in original reward units."""
    A = np.eye(m.n) - m.gamma * m.P
    V = np.linalg.solve(A, m.mean_rewards)
    residual = np.max(np.abs(A @ V - m.mean_rewards))
    if residual > 1e-10 * max(1.0, np.abs(V).max()):
        raise np.linalg.LinAlgError(f"Bellman residual {residual:.3e} too large")
    return V


def return_bounds(m):
    """Symmetric range ``[-r/(1-gamma), r/(1-gamma)]`` with ``r`` the largest absolute reward.

    On this range the Bellman backup never pushes mass past the end atoms.
    """
    lo, hi = m.reward_bounds
    r = max(abs(lo), abs(hi), 1e-12)
    return -r / (1 - m.gamma), r / (1 - m.gamma)


def dirac_table(g, n, value=0.0):
    """n rows, each the Cramér projection of a unit mass at return ``value``."""
    from .geometry import project_masses

    row = project_masses(g, [g.to_canonical(value)], [1.0])
    return np.tile(row, (n, 1))


def reference_value_distribution(m, g, tol=1e-10, max_iter=200_000, xi=None,
                                 clamp_tol=1e-9, method="iterate"):
    """Categorical fixed point of the support-projected distributional Bellman operator.

    Iterates from a Dirac at return 0 until successive iterates are within
    ``tol`` in the xi-weighted l_lambda distance (the square root of l2_lambda).
    ``method="solve"`` instead solves the (nk)-dimensional linear system for
    the unit-mass fixed point directly.  Raises :class:`SupportTooNarrowError`
    when the converged operator still clamps more than ``clamp_tol`` of mass at
    the grid boundary.
    """
    from .bellman import ProjectedBellman

    if tol <= 0:
        raise ValueError("tol must be positive")
    op = ProjectedBellman(m, g)
    if method == "solve":
        P = _solve_fixed_point(m, g, op)
        _check_clamping(g, op, P, clamp_tol)
        return P
    if method != "iterate":
        raise ValueError(f"unknown method {method!r}")
    xi = stationary_distribution(m) if xi is None else xi
    P = dirac_table(g, m.n)
    for _ in range(max_iter):
        nxt = op(P)
        step = np.sqrt(max(xi_norm_sq(xi, nxt - P, g.C_lambda), 0.0))
        P = nxt
        if step <= tol:
            break
    else:
        raise ConvergenceError(f"reference iteration stalled at step {step:.3e}",
                               residual=step, iterations=max_iter)
    _check_clamping(g, op, P, clamp_tol)
    return P


def _solve_fixed_point(m, g, op):
    # P = Pi_{e-perp}(T'P) + 1/k pins the mass of every row to one and has a
    # unique solution because T' contracts the centered part
    n, k = m.n, g.k
    M = np.einsum("xy,xjl,lt->xtyj", m.P, op.kernels, g.Pi_e_perp, optimize=True)
    system = np.eye(n * k) - M.reshape(n * k, n * k)
    return np.linalg.solve(system, np.full(n * k, 1.0 / k)).reshape(n, k)


def _check_clamping(g, op, P, clamp_tol):
    clamped = op.clamped_mass(P)
    if clamped.max() > clamp_tol:
        raise SupportTooNarrowError(
            f"support [{g.v_min:g}, {g.v_max:g}] too narrow: {clamped.max():.3e} "
            f"of mass falls outside the grid")
