"""Cramér metric machinery over a fixed, evenly spaced support.

All quantities are expressed in canonical atom coordinates: ``k`` odd atoms
``z_i = (2i - 1 - k) / 2`` with unit spacing and zero mean.  A geometry may
carry an affine map to "original" return units (``y = center + spacing * z``)
so that arbitrary ranges such as ``[-10, 10]`` are handled at the boundary.
The Cramér (centered) terms scale linearly with ``spacing`` when converted
back to original units; the mass terms are unit free.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# eigenvalues below this fraction of the largest are the null direction of C_0
ZERO_EIG_RTOL = 1e-10
EXTENSION_RTOL = 1e-8


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CramerGeometry:
    k: int
    lam: float
    atoms: np.ndarray
    C: np.ndarray
    e: np.ndarray
    Pi_e_perp: np.ndarray
    C0: np.ndarray
    C_lambda: np.ndarray
    A: np.ndarray
    center: float = 0.0
    spacing: float = 1.0

    @property
    def ones(self):
        return np.ones(self.k)

    @property
    def atoms_original(self):
        return self.center + self.spacing * self.atoms

    @property
    def v_min(self):
        return self.center + self.spacing * self.atoms[0]

    @property
    def v_max(self):
        return self.center + self.spacing * self.atoms[-1]

    def to_canonical(self, y):
        return (np.asarray(y, dtype=float) - self.center) / self.spacing

    def from_canonical(self, z):
        return self.center + self.spacing * np.asarray(z, dtype=float)

    def with_lambda(self, lam):
        return build_geometry(self.k, lam, self.v_min, self.v_max)

    def __repr__(self):
        return (f"CramerGeometry(k={self.k}, lam={self.lam}, "
                f"range=[{self.v_min:g}, {self.v_max:g}])")


def support_atoms(k):
    i = np.arange(1, k + 1)
    return (2 * i - 1 - k) / 2.0


def build_geometry(k, lam=1.0, v_min=None, v_max=None):
    """Materialize ``C``, ``e``, ``Pi_{e-perp}``, ``C_0``, ``C_lambda`` and ``A``.

    ``v_min``/``v_max`` (both or neither) fix the original-unit range that the
    unit-spaced canonical atoms are mapped onto.
    """
    if int(k) != k or k < 3 or k % 2 == 0:
        raise ValueError(f"k must be an odd integer >= 3, got {k!r}")
    if not np.isfinite(lam) or lam < 0:
        raise ValueError(f"lambda must be a finite nonnegative number, got {lam!r}")
    k = int(k)
    if (v_min is None) != (v_max is None):
        raise ValueError("give both v_min and v_max, or neither")
    if v_min is None:
        center, spacing = 0.0, 1.0
    else:
        if not v_max > v_min:
            raise ValueError("v_max must exceed v_min")
        center = (v_min + v_max) / 2.0
        spacing = (v_max - v_min) / (k - 1)

    C = np.tril(np.ones((k, k)))
    e = np.full(k, 1.0 / np.sqrt(k))
    Pi = np.eye(k) - np.outer(e, e)
    C0 = Pi @ C @ C.T @ Pi
    C0 = (C0 + C0.T) / 2
    C_lambda = C0 + lam * np.outer(e, e)
    A = Pi @ C
    return CramerGeometry(
        k=k, lam=float(lam), atoms=_frozen(support_atoms(k)), C=_frozen(C),
        e=_frozen(e), Pi_e_perp=_frozen(Pi), C0=_frozen(C0),
        C_lambda=_frozen(C_lambda), A=_frozen(A),
        center=float(center), spacing=float(spacing),
    )


def _difference(g, p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape[-1] != g.k or q.shape[-1] != g.k:
        raise ValueError(f"vectors must have length k={g.k}, got {p.shape} and {q.shape}")
    return p - q


# -- losses over the atom grid ------------------------------------------------

def loss_cc(g, p, q):
    """Squared distance between cumulative distributions, ``||C(p - q)||^2``."""
    d = _difference(g, p, q)
    return float(np.sum((g.C @ d) ** 2))


def loss_ctc(g, p, q):
    """Squared distance between tail cumulative distributions, ``||C^T(p - q)||^2``."""
    d = _difference(g, p, q)
    return float(np.sum((g.C.T @ d) ** 2))


def loss_lambda(g, p, q):
    d = _difference(g, p, q)
    return float(d @ g.C_lambda @ d)


def loss_hat(g, p, q):
    """Centered Cramér term plus ``lam * (sum(q) - 1)^2``.

    Not symmetric: the penalty only looks at the prediction ``q``.
    """
    d = _difference(g, p, q)
    return float(d @ g.C0 @ d + g.lam * (np.sum(q) - 1.0) ** 2)


def loss_hat_gradient(g, p, q):
    """Gradient of :func:`loss_hat` with respect to ``q``."""
    d = _difference(g, p, q)
    q = np.asarray(q, dtype=float)
    return -2.0 * (g.C0 @ d) + 2.0 * g.lam * (np.sum(q) - 1.0) * np.ones(g.k)


def xi_norm_sq(xi, D, B):
    """``sum_x xi(x) D(x)^T B D(x)`` for a table ``D`` of shape (..., n, k)."""
    D = np.asarray(D, dtype=float)
    return np.sum(np.asarray(xi) * np.sum((D @ B) * D, axis=-1), axis=-1)


def mass_matrix(g):
    return np.outer(g.e, g.e)


# -- spectra -------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionAnalysis:
    k: int
    kappa_cc: float
    kappa_min: float
    lambda_low: float
    lambda_high: float


def condition_number(M):
    """Ratio of extreme eigenvalues of a symmetric matrix; ``inf`` when it is singular."""
    ev = np.linalg.eigvalsh(M)
    if ev[0] <= ZERO_EIG_RTOL * abs(ev[-1]):
        return np.inf
    return float(ev[-1] / ev[0])


def nonzero_spectrum(C0):
    """Eigenvalues of ``C_0`` with its single null eigenvalue removed (ascending)."""
    ev = np.linalg.eigvalsh(C0)
    keep = ev > ZERO_EIG_RTOL * ev[-1]
    if np.count_nonzero(~keep) != 1:
        raise np.linalg.LinAlgError(
            f"expected exactly one null eigenvalue of C_0, found {np.count_nonzero(~keep)}")
    return ev[keep]


def condition_analysis(k):
    g = build_geometry(k, 0.0)
    ev_cc = np.linalg.eigvalsh(g.C @ g.C.T)
    spec = nonzero_spectrum(g.C0)
    low, high = float(spec[0]), float(spec[-1])
    kappa_min = high / low
    for lam in (low, np.sqrt(low * high), high):
        got = condition_number(g.C0 + lam * mass_matrix(g))
        if abs(got - kappa_min) > 1e-8 * kappa_min:
            raise np.linalg.LinAlgError(
                f"cond(C_lambda) at lambda={lam} is {got}, expected {kappa_min}")
    return ConditionAnalysis(k=int(k), kappa_cc=float(ev_cc[-1] / ev_cc[0]),
                             kappa_min=kappa_min, lambda_low=low, lambda_high=high)


def extension_offset(k, M):
    """Best ``a`` with ``M - CC^T ~ a e^T + e a^T`` and the Frobenius residual."""
    M = np.asarray(M, dtype=float)
    if M.shape != (k, k):
        raise ValueError(f"M must be {k}x{k}, got {M.shape}")
    C = np.tril(np.ones((k, k)))
    e = np.full(k, 1.0 / np.sqrt(k))
    D = M - C @ C.T
    # D e = a + e (a.e) and e^T D e = 2 a.e
    ae = e @ D @ e / 2.0
    a = D @ e - ae * e
    residual = np.linalg.norm(D - np.outer(a, e) - np.outer(e, a))
    return a, float(residual)


def is_cramer_extension(k, M, rtol=EXTENSION_RTOL):
    """True iff ``M = CC^T + a e^T + e a^T`` for some vector ``a``."""
    M = np.asarray(M, dtype=float)
    if not np.allclose(M, M.T, rtol=0, atol=rtol * max(1.0, np.abs(M).max())):
        raise ValueError("M must be symmetric")
    _, residual = extension_offset(k, M)
    return residual <= rtol * np.linalg.norm(M)


# -- projection of finite mixtures onto the atoms --------------------------------

def projection_matrix(g, locations):
    """Row ``i`` is the Cramér projection of a unit mass at ``locations[i]``.

    Mass between two atoms is split linearly; mass beyond the grid is clamped
    to the nearest boundary atom.
    """
    y = np.clip(np.asarray(locations, dtype=float).ravel(), g.atoms[0], g.atoms[-1])
    pos = y - g.atoms[0]
    lo = np.minimum(np.floor(pos).astype(int), g.k - 2)
    frac = pos - lo
    out = np.zeros((y.size, g.k))
    rows = np.arange(y.size)
    out[rows, lo] = 1.0 - frac
    out[rows, lo + 1] += frac
    return out


def project_masses(g, locations, masses):
    masses = np.asarray(masses, dtype=float).ravel()
    if masses.size == 0:
        return np.zeros(g.k)
    return masses @ projection_matrix(g, locations)


def cramer_project_support(g, mixture):
    """Project a list of ``(location, mass)`` point masses onto the atoms."""
    mixture = list(mixture)
    if not mixture:
        return np.zeros(g.k)
    locs, masses = zip(*mixture)
    return project_masses(g, locs, masses)


def outside_mass(g, locations, masses):
    """Total absolute mass lying strictly outside ``[z_1, z_k]``."""
    y = np.asarray(locations, dtype=float)
    out = (y < g.atoms[0]) | (y > g.atoms[-1])
    return float(np.abs(np.asarray(masses, dtype=float)[out]).sum())


# -- the distance on a refined grid ------------------------------------------------
# Mixtures with off-grid locations are compared on the union of their locations
# and the atoms.  The centering step removes mass uniformly over the atoms only,
# so the value agrees with loss_lambda for vectors supported on the atoms.

def _refine(g, *location_sets):
    grid = np.union1d(g.atoms, np.concatenate([np.ravel(s) for s in location_sets]))
    return grid


def _embed(grid, locations, masses):
    v = np.zeros(grid.size)
    np.add.at(v, np.searchsorted(grid, np.ravel(locations)), np.ravel(masses))
    return v


def mixture_distance(g, a_locs, a_masses, b_locs, b_masses, penalty="lambda"):
    """l2_lambda between two finite mixtures, evaluated on their common grid.

    ``penalty="centered"`` drops the mass term (the ``lambda = 0`` distance).
    """
    a_locs, b_locs = np.ravel(a_locs).astype(float), np.ravel(b_locs).astype(float)
    grid = _refine(g, a_locs, b_locs)
    d = _embed(grid, a_locs, a_masses) - _embed(grid, b_locs, b_masses)
    atom_idx = np.searchsorted(grid, g.atoms)
    mass = d.sum()
    dc = d.copy()
    dc[atom_idx] -= mass / g.k
    F = np.cumsum(dc)[:-1]
    value = float(np.sum(np.diff(grid) * F ** 2))
    if penalty == "lambda":
        value += g.lam * mass ** 2 / g.k
    elif penalty != "centered":
        raise ValueError(f"unknown penalty {penalty!r}")
    return value


def refined_quadratic(g, locations):
    """Grid and quadratic forms ``(grid, G_lambda, G_centered, E)`` on a refined grid.

    ``E`` embeds atom vectors into grid coordinates, and ``E^T G_lambda E``
    equals ``C_lambda``.
    """
    grid = _refine(g, np.asarray(locations, dtype=float))
    N = grid.size
    atom_idx = np.searchsorted(grid, g.atoms)
    u = np.zeros(N)
    u[atom_idx] = 1.0 / g.k
    K = np.eye(N) - np.outer(u, np.ones(N))
    F = (np.tril(np.ones((N, N))) @ K)[:-1]
    G0 = F.T @ (np.diff(grid)[:, None] * F)
    G = G0 + g.lam / g.k * np.ones((N, N))
    E = np.zeros((N, g.k))
    E[atom_idx, np.arange(g.k)] = 1.0
    return grid, G, G0, E


# -- constrained projections and expectations ----------------------------------------

def affine_project(g, p, A, b):
    """Minimize ``(p - q)^T C_lambda (p - q)`` subject to ``A q = b`` (KKT block solve)."""
    if g.lam <= 0:
        raise ValueError("affine_project needs lambda > 0 so that C_lambda is invertible")
    p = np.asarray(p, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    c, k = A.shape
    if k != g.k or p.shape != (g.k,) or b.shape != (c,):
        raise ValueError("shape mismatch between p, A and b")
    if np.linalg.matrix_rank(A) < c:
        raise ValueError("constraint matrix A must have full row rank")
    kkt = np.block([[g.C_lambda, A.T], [A, np.zeros((c, c))]])
    rhs = np.concatenate([g.C_lambda @ p, b])
    sol = np.linalg.solve(kkt, rhs)
    return sol[:k]


def expected_value(g, q):
    """``z^T q`` in canonical atom units."""
    return float(g.atoms @ np.asarray(q, dtype=float))


def expected_return(g, q):
    """Expectation of ``q`` in original units (mass-aware)."""
    q = np.asarray(q, dtype=float)
    return g.spacing * (q @ g.atoms) + g.center * q.sum(axis=-1)


def boundary_vector(k):
    b = np.zeros(k)
    b[0], b[-1] = -1.0, 1.0
    return b


def verify_inverse_z(g, atol=1e-8):
    """Check ``C_lambda b = z`` for ``b = [-1, 0, ..., 0, 1]``."""
    if g.lam <= 0:
        raise ValueError("C_lambda is singular for lambda = 0")
    return bool(np.max(np.abs(g.C_lambda @ boundary_vector(g.k) - g.atoms)) <= atol)


def expectation_constant(g):
    """``z^T C_lambda^{-1} z``, the constant in the expected-value error bound."""
    if g.lam <= 0:
        raise ValueError("C_lambda is singular for lambda = 0")
    return float(g.atoms @ np.linalg.solve(g.C_lambda, g.atoms))


def normalized_width(g):
    """Fixed-width variant ``(C / k, z / k)``; provided for comparison only."""
    return g.C / g.k, g.atoms / g.k
