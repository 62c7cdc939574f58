"""Distributional Bellman operators over categorical value-distribution tables.

A value-distribution table is an ``(n, k)`` float array whose rows are
(possibly improper) mass vectors over the atoms of a shared geometry.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .geometry import project_masses, projection_matrix

# canonical distance past the end atoms that still counts as on the grid
BOUNDARY_SLACK = 1e-9


class SampleTransition(NamedTuple):
    x: int
    r: float
    x_next: int


def shifted_atoms(g, reward, gamma):
    """Canonical locations of ``reward + gamma * Z`` for ``Z`` on the atoms.

    ``reward`` is in original units; the returned locations are canonical.
    """
    return gamma * g.atoms + (reward - (1.0 - gamma) * g.center) / g.spacing


def shift_matrix(g, reward, gamma):
    """k x k matrix mapping a row ``p`` to the projection of ``f_{r,gamma}(p)``."""
    return projection_matrix(g, shifted_atoms(g, reward, gamma))


class ProjectedBellman:
    """``T' = Pi_D T``: the distributional Bellman operator followed by projection.

    Since the projection is linear, projecting the full finite mixture equals
    summing the per-reward projected kernels; those kernels are built once.
    """

    def __init__(self, m, g):
        self.mdp = m
        self.geometry = g
        k = g.k
        self.kernels = np.zeros((m.n, k, k))
        self.outside = np.zeros((m.n, k))
        for x, (values, probs) in enumerate(m.rewards):
            for r, w in zip(values, probs):
                locs = shifted_atoms(g, r, m.gamma)
                self.kernels[x] += w * projection_matrix(g, locs)
                beyond = (locs < g.atoms[0] - BOUNDARY_SLACK) | (locs > g.atoms[-1] + BOUNDARY_SLACK)
                self.outside[x] += w * beyond

    def __call__(self, P):
        P = _check_table(self.geometry, P, self.mdp.n)
        return np.einsum("...xj,xjl->...xl", self.mdp.P @ P, self.kernels)

    def clamped_mass(self, P):
        """Per-state absolute mass that the projection had to clamp to the boundary."""
        return np.einsum("xj,xj->x", self.mdp.P @ np.abs(P), self.outside)


def _check_table(g, P, n):
    P = np.asarray(P, dtype=float)
    if P.shape[-2:] != (n, g.k):
        raise ValueError(f"expected a table of shape (..., {n}, {g.k}), got {P.shape}")
    return P


def bellman_mixture(m, g, P, x):
    """The unprojected target at state ``x`` as a list of ``(location, mass)``."""
    mixture = []
    values, probs = m.rewards[x]
    for x_next in np.flatnonzero(m.P[x]):
        for r, w in zip(values, probs):
            weight = m.P[x, x_next] * w
            for loc, mass in zip(shifted_atoms(g, r, m.gamma), P[x_next]):
                mixture.append((float(loc), float(weight * mass)))
    return mixture


def apply_bellman_projected(m, g, P):
    return ProjectedBellman(m, g)(P)


def reset_mass(g, T):
    """``Pi_{e-perp} T + e / sqrt(k)`` rowwise: every row ends with unit mass."""
    T = np.asarray(T, dtype=float)
    return T - T.mean(axis=-1, keepdims=True) + 1.0 / g.k


def apply_reset_operator(m, g, P):
    return reset_mass(g, apply_bellman_projected(m, g, P))


def sample_transition(m, x, rng):
    x_next = int(rng.choice(m.n, p=m.P[x]))
    values, probs = m.rewards[x]
    r = float(rng.choice(values, p=probs))
    return SampleTransition(int(x), r, x_next)


def sample_bellman_target(g, P, t, gamma):
    """Projected ``f_{r,gamma}(P(x'))`` for one sampled transition."""
    return project_masses(g, shifted_atoms(g, t.r, gamma), np.asarray(P)[t.x_next])


def tabular_mixture_update(g, P, t, gamma, alpha):
    """``P(x) <- (1 - alpha) P(x) + alpha * target``; other rows untouched."""
    if not 0 < alpha <= 1:
        raise ValueError(f"step size must lie in (0, 1], got {alpha}")
    out = np.array(P, dtype=float, copy=True)
    out[t.x] = (1 - alpha) * out[t.x] + alpha * sample_bellman_target(g, P, t, gamma)
    return out


def run_mixture_updates(m, g, P0, schedule, steps, seed, x0=0):
    """Apply :func:`tabular_mixture_update` along one simulated trajectory.

    Transitions are pre-sampled with a single generator and the per-reward
    projection kernels are built once, so long runs stay cheap.  Step ``t``
    uses ``schedule(t)``.
    """
    rng = np.random.default_rng(seed)
    P = np.array(P0, dtype=float, copy=True)
    _check_table(g, P, m.n)
    kernels = [[shift_matrix(g, r, m.gamma) for r in values] for values, _ in m.rewards]
    cdf_next = np.cumsum(m.P, axis=1)
    cdf_rew = [np.cumsum(probs) for _, probs in m.rewards]
    u_next, u_rew = rng.random(steps), rng.random(steps)
    x = int(x0)
    for t in range(steps):
        alpha = schedule(t)
        if not 0 < alpha <= 1:
            raise ValueError(f"step size must lie in (0, 1], got {alpha}")
        x_next = min(int(np.searchsorted(cdf_next[x], u_next[t], side="right")), m.n - 1)
        ri = min(int(np.searchsorted(cdf_rew[x], u_rew[t], side="right")), len(cdf_rew[x]) - 1)
        target = P[x_next] @ kernels[x][ri]
        P[x] += alpha * (target - P[x])
        x = x_next
    return P
