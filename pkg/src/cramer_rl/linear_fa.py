"""Linear value-distribution models ``Q = Phi @ Theta`` and their projected processes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bellman import ProjectedBellman, reset_mass, shift_matrix
from .errors import DivergenceError
from .geometry import (boundary_vector, expectation_constant, mass_matrix,
                       mixture_distance, project_masses, refined_quadratic,
                       xi_norm_sq)
from .mdp import reference_value_distribution, stationary_distribution

GRAM_COND_MAX = 1e12
# largest m*k for which the process iterates an explicit parameter-space operator
AFFINE_MAX_DIM = 400


@dataclass(frozen=True, eq=False)
class LinearModel:
    Phi: np.ndarray
    Theta: np.ndarray

    def __post_init__(self):
        Phi = np.atleast_2d(np.asarray(self.Phi, dtype=float))
        Theta = np.atleast_2d(np.asarray(self.Theta, dtype=float))
        n, m = Phi.shape
        if m > n or np.linalg.matrix_rank(Phi) < m:
            raise ValueError(f"Phi ({n}x{m}) must have full column rank")
        if Theta.shape[0] != m:
            raise ValueError(f"Theta must have {m} rows, got {Theta.shape}")
        object.__setattr__(self, "Phi", Phi)
        object.__setattr__(self, "Theta", Theta)

    @property
    def table(self):
        return self.Phi @ self.Theta


def make_features(kind, n, m=None, seed=0):
    """Feature matrices: ``tabular`` (identity), ``random`` (Gaussian), ``fourier`` (cosines)."""
    if kind == "tabular":
        if m not in (None, n):
            raise ValueError("tabular features need m == n")
        return np.eye(n)
    if m is None or not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    if kind == "random":
        rng = np.random.default_rng(seed)
        return rng.normal(size=(n, m))
    if kind == "fourier":
        x = (np.arange(n) + 0.5) / n
        return np.cos(np.pi * np.outer(x, np.arange(m)))
    raise ValueError(f"unknown feature kind {kind!r}")


def projection_weights(xi, Phi):
    """``W = (Phi^T Xi Phi)^{-1} Phi^T Xi`` so that the xi-weighted fit of ``P`` is ``W @ P``."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0):
        raise ValueError("xi must be strictly positive")
    gram = Phi.T @ (xi[:, None] * Phi)
    if np.linalg.cond(gram) > GRAM_COND_MAX:
        raise np.linalg.LinAlgError("Phi^T diag(xi) Phi is singular")
    return np.linalg.solve(gram, Phi.T * xi)


def project_xi(g, xi, Phi, P):
    """xi-weighted projection onto the span of ``Phi`` in the ``C_lambda`` metric.

    ``C_lambda`` is invertible for ``lambda > 0`` and drops out of the normal
    equations, leaving an ordinary weighted least-squares fit per atom.
    """
    if g.lam <= 0:
        raise ValueError("project_xi needs lambda > 0")
    return Phi @ (projection_weights(xi, Phi) @ np.asarray(P, dtype=float))


def hat_normal_equations(g, xi, Phi, P):
    """Dense (m*k)-dimensional normal equations of the normalization-penalized fit.

    Returns ``(K, rhs)`` with ``Theta.ravel()`` solving ``K theta = rhs``.
    """
    xi = np.asarray(xi, dtype=float)
    P = np.asarray(P, dtype=float)
    gram = Phi.T @ (xi[:, None] * Phi)
    H = g.C0 + g.lam * np.ones((g.k, g.k))
    K = np.kron(gram, H)
    rhs = Phi.T @ (xi[:, None] * (P @ g.C0 + g.lam))
    return K, rhs.ravel()


def project_hat(g, xi, Phi, P):
    """Minimize ``sum_x xi(x) * loss_hat(P(x), (Phi Theta)(x))`` over ``Theta``.

    For ``lambda = 0`` the minimizer is only defined up to per-feature
    multiples of ``e``; the minimum-norm solution is returned.
    """
    K, rhs = hat_normal_equations(g, xi, Phi, P)
    m = Phi.shape[1]
    if g.lam > 0:
        if np.linalg.cond(K) > GRAM_COND_MAX:
            raise np.linalg.LinAlgError("normal equations of the penalized fit are singular")
        theta = np.linalg.solve(K, rhs)
    else:
        theta = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return Phi @ theta.reshape(m, g.k)


class HatProjector:
    """Closed form of :func:`project_hat`, precomputed for repeated application.

    ``Theta = W (P C_0 + lam 1 1^T) (C_0 + lam 1 1^T)^{-1}``; for ``lam = 0`` the
    pseudo-inverse gives ``W P Pi_{e-perp}``.  Accepts batched tables.
    """

    def __init__(self, g, xi, Phi):
        self.geometry = g
        self.Phi = np.asarray(Phi, dtype=float)
        self.W = projection_weights(xi, self.Phi)
        if g.lam > 0:
            self.H_inv = np.linalg.inv(g.C0 + g.lam * np.ones((g.k, g.k)))
            self.mass_row = g.lam * self.W.sum(axis=1)[:, None] * (np.ones(g.k) @ self.H_inv)

    def weights(self, P):
        g = self.geometry
        if g.lam > 0:
            return self.W @ (P @ (g.C0 @ self.H_inv)) + self.mass_row
        return self.W @ (P @ g.Pi_e_perp)

    def __call__(self, P):
        return self.Phi @ self.weights(P)


# -- the projected distributional Bellman process ------------------------------------

def step_metric(g):
    """Metric used to measure successive iterates: ``C_lambda``, or ``C_0`` when lambda = 0."""
    return g.C_lambda if g.lam > 0 else g.C0


@dataclass
class FixedPointReport:
    P_tilde: np.ndarray
    Theta: np.ndarray
    iterations: int
    final_step: float
    converged: bool
    lhs_bound: float
    rhs_bound: float
    mass_term: float
    approx_error: float
    bound_holds: bool | None
    steps: np.ndarray = field(repr=False, default=None)

    def summary(self, **extra):
        out = {
            "iterations": int(self.iterations),
            "final_step": float(self.final_step),
            "lhs_bound": float(self.lhs_bound),
            "rhs_bound": float(self.rhs_bound),
            "mass_term": float(self.mass_term),
        }
        out.update(extra)
        return out


def parameter_operator(m, g, Phi, xi, bellman=None):
    """Affine map on ``vec(Theta)`` realizing one step ``Theta -> hat-projection(T' Phi Theta)``.

    Returns ``(L, c)`` with ``vec(Theta') = L @ vec(Theta) + c`` (row-major).
    Iterating this ``mk``-dimensional map reproduces the table-space process
    exactly while being far cheaper for ``m << n``.
    """
    bellman = ProjectedBellman(m, g) if bellman is None else bellman
    hat = HatProjector(g, xi, Phi)
    mk = Phi.shape[1] * g.k
    right = g.C0 @ hat.H_inv if g.lam > 0 else g.Pi_e_perp
    Psi = m.P @ Phi
    kern = bellman.kernels @ right
    L = np.einsum("ax,xi,xjl->alij", hat.W, Psi, kern, optimize=True)
    L = L.reshape(mk, mk)
    c = hat.mass_row.ravel() if g.lam > 0 else np.zeros(mk)
    return L, c


def affine_step(L, c):
    """Step function ``Theta -> vec^{-1}(L vec(Theta) + c)`` for batched ``Theta``.

    With a stack of operators ``L`` of shape (S, mk, mk), ``Theta`` may have
    shape (S, I, m, k): each operator acts on its own I parameter sets.
    """
    LT = np.ascontiguousarray(np.swapaxes(L, -1, -2))

    def step(Theta):
        flat = Theta.reshape(*Theta.shape[:-2], -1)
        return (flat @ LT + c).reshape(Theta.shape)
    return step


def table_step(m, g, Phi, xi, bellman=None):
    """Step function going through the table: ``Theta -> weights(hat(T'(Phi Theta)))``."""
    bellman = ProjectedBellman(m, g) if bellman is None else bellman
    hat = HatProjector(g, xi, Phi)
    return lambda Theta: hat.weights(bellman(Phi @ Theta))


def iterate_parameters(step_fn, theta0, gram, metric, tol, budget):
    """Run ``Theta <- step_fn(Theta)`` until each batch element's step is <= tol.

    ``theta0`` has shape (..., m, k); ``gram`` may carry the same leading batch
    dimensions.  Steps are measured as
    ``||Phi (Theta' - Theta)||_{xi, metric}`` through ``gram = Phi^T Xi Phi``.
    Elements are frozen once they converge.  Returns
    ``(Theta, iterations, final_steps, step_history)``.
    """
    Theta = np.array(theta0, dtype=float, copy=True)
    batch = Theta.shape[:-2]
    iterations = np.zeros(batch, dtype=int)
    final = np.full(batch, np.inf)
    done = np.zeros(batch, dtype=bool)
    history = []
    for it in range(1, budget + 1):
        nxt = step_fn(Theta)
        D = nxt - Theta
        step = np.sum(gram * ((D @ metric) @ np.swapaxes(D, -1, -2)), axis=(-2, -1))
        step = np.broadcast_to(np.sqrt(np.maximum(step, 0.0)), batch)
        history.append(np.where(done, np.nan, step))
        final = np.where(done, final, step)
        iterations = np.where(done, iterations, it)
        Theta = np.where(done[..., None, None], Theta, nxt)
        done = done | (step <= tol)
        if done.all():
            break
    return Theta, iterations, final, np.array(history)


def fixed_point_bound_terms(g, xi, P_tilde, P_pi, Phi):
    """Evaluate both sides of the fixed-point error bound.

    Returns ``(lhs, approx_error, mass_term)`` where ``approx_error`` is the
    xi-weighted l2_lambda distance from ``P_pi`` to its projection onto ``Phi``.
    """
    gamma_free = xi_norm_sq(xi, P_tilde - P_pi, g.C_lambda)
    approx = xi_norm_sq(xi, Phi @ (projection_weights(xi, Phi) @ P_pi) - P_pi, g.C_lambda)
    mass = xi_norm_sq(xi, P_tilde - P_pi, mass_matrix(g))
    return float(gamma_free), float(approx), float(mass)


def projected_process(m, g, Phi, Theta0, tol=1e-10, budget=10_000, xi=None, P_pi=None,
                      bound_atol=1e-8):
    """Iterate ``P_{k+1} = hat-projection(T' P_k)`` from ``P_0 = Phi Theta0``.

    Convergence is declared on the xi-weighted ``C_lambda`` distance between
    successive iterates (``C_0`` when lambda = 0, where only the centered part
    is determined).  The report also evaluates the fixed-point error bound
    against the reference distribution ``P_pi``.
    """
    xi = stationary_distribution(m) if xi is None else xi
    if P_pi is None:
        P_pi = reference_value_distribution(m, g, xi=xi)
    Phi = np.asarray(Phi, dtype=float)
    if Phi.shape[1] * g.k <= AFFINE_MAX_DIM:
        step_fn = affine_step(*parameter_operator(m, g, Phi, xi))
    else:
        step_fn = table_step(m, g, Phi, xi)
    gram = Phi.T @ (xi[:, None] * Phi)
    Theta, iters, final, history = iterate_parameters(
        step_fn, Theta0, gram, step_metric(g), tol, budget)
    P = Phi @ Theta
    lhs, approx, mass = fixed_point_bound_terms(g, xi, P, P_pi, Phi)
    gamma = m.gamma
    rhs = approx / (1 - gamma) - gamma * g.lam / (1 - gamma) * mass
    converged = bool(final <= tol)
    holds = bool(lhs <= rhs + bound_atol) if g.lam > 0 else None
    return FixedPointReport(
        P_tilde=P, Theta=Theta, iterations=int(iters), final_step=float(final),
        converged=converged, lhs_bound=lhs, rhs_bound=float(rhs), mass_term=mass,
        approx_error=approx, bound_holds=holds, steps=history)


# -- stochastic semi-gradient process ----------------------------------------------------

@dataclass(frozen=True)
class StepSchedule:
    """``alpha_t = alpha0 / (1 + t / tau)``: satisfies the Robbins-Monro conditions."""

    alpha0: float = 0.5
    tau: float = 1000.0

    def __call__(self, t):
        return self.alpha0 / (1.0 + t / self.tau)


def expected_semi_gradient(m, g, Phi, Theta, xi):
    """Mean of the sampled update direction when ``x ~ xi``; zero at the process fixed point."""
    P = Phi @ Theta
    target = ProjectedBellman(m, g)(P)
    grad_q = -2.0 * (target - P) @ g.C0 + 2.0 * g.lam * (P.sum(axis=1, keepdims=True) - 1.0)
    return Phi.T @ (xi[:, None] * grad_q)


def _categorical(rng, probs, size):
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(size), side="right")


def sgd_policy_evaluation(m, g, Phi, Theta0, schedule, total_steps, seed, xi=None,
                          sampling="stationary", max_norm=1e6):
    """Semi-gradient descent on the normalization-penalized loss from sampled transitions.

    Each step draws ``x`` (from ``xi``, or along one trajectory), then ``x'`` and
    ``r``; the projected target uses the current parameters but is held fixed
    for the gradient.
    """
    if g.lam <= 0:
        raise ValueError("sgd_policy_evaluation needs lambda > 0")
    rng = np.random.default_rng(seed)
    xi = stationary_distribution(m) if xi is None else xi
    Phi = np.asarray(Phi, dtype=float)
    Theta = np.array(Theta0, dtype=float, copy=True)
    kernels = [[shift_matrix(g, r, m.gamma) for r in values] for values, _ in m.rewards]
    C0, lam, ones = g.C0, g.lam, np.ones(g.k)

    if sampling == "stationary":
        xs = _categorical(rng, xi, total_steps)
    elif sampling == "trajectory":
        xs = None
        x = int(_categorical(rng, xi, 1)[0])
    else:
        raise ValueError(f"unknown sampling scheme {sampling!r}")
    u_next = rng.random(total_steps)
    u_rew = rng.random(total_steps)
    cdf_next = np.cumsum(m.P, axis=1)
    cdf_rew = [np.cumsum(probs) for _, probs in m.rewards]

    for t in range(total_steps):
        if xs is not None:
            x = int(xs[t])
        x_next = min(int(np.searchsorted(cdf_next[x], u_next[t], side="right")), m.n - 1)
        ri = min(int(np.searchsorted(cdf_rew[x], u_rew[t], side="right")),
                 len(cdf_rew[x]) - 1)
        target = (Phi[x_next] @ Theta) @ kernels[x][ri]
        q = Phi[x] @ Theta
        grad_q = -2.0 * (C0 @ (target - q)) + 2.0 * lam * (q.sum() - 1.0) * ones
        Theta -= schedule(t) * np.outer(Phi[x], grad_q)
        if t % 1000 == 0 and not np.all(np.abs(Theta) < max_norm):
            raise DivergenceError(f"parameters exceeded {max_norm:g} at step {t}")
        if xs is None:
            x = x_next
    if not np.all(np.abs(Theta) < max_norm):
        raise DivergenceError(f"parameters exceeded {max_norm:g}")
    return Phi @ Theta


# -- expected-value error bound ----------------------------------------------------------

@dataclass(frozen=True)
class ExpectationBound:
    lhs: float
    rhs: float
    constant: float

    @property
    def ratio(self):
        return self.lhs / self.rhs if self.rhs > 0 else np.nan

    def holds(self, atol=1e-10):
        return self.lhs <= self.rhs + atol


def expectation_bound(g, xi, P_tilde, P_pi, V_pi):
    """Squared xi-weighted expectation error against ``constant * l2_{xi,lambda}``.

    ``V_pi`` is in original units; the comparison is made in atom units, where
    the constant is ``z^T C_lambda^{-1} z``.
    """
    constant = expectation_constant(g)
    err = np.asarray(P_tilde) @ g.atoms - g.to_canonical(V_pi)
    lhs = float(np.sum(xi * err ** 2))
    rhs = constant * float(xi_norm_sq(xi, np.asarray(P_tilde) - P_pi, g.C_lambda))
    return ExpectationBound(lhs=lhs, rhs=rhs, constant=constant)


def tightness_probe(g, xi, P_pi, V_pi, scale=0.1):
    """Bound evaluated at ``P_pi + scale * C_lambda^{-1} z`` in every state.

    ``C_lambda^{-1} z`` is the boundary vector ``[-1, 0, ..., 0, 1]``.
    """
    direction = np.linalg.solve(g.C_lambda, g.atoms)
    return expectation_bound(g, xi, P_pi + scale * direction, P_pi, V_pi)


# -- gradients through the support projection ---------------------------------------------

def mixture_gradients(g, locations, masses, M, theta):
    """Parameter gradients of the loss against a mixture and against its projection.

    ``q(theta) = M @ theta``.  Returns a dict with the refined-grid gradient and
    the projected-target gradient, for both the l2_lambda distance and the
    normalization-penalized loss.
    """
    locations = np.asarray(locations, dtype=float)
    masses = np.asarray(masses, dtype=float)
    M = np.asarray(M, dtype=float)
    q = M @ theta
    grid, G, G0, E = refined_quadratic(g, locations)
    p_ref = np.zeros(grid.size)
    np.add.at(p_ref, np.searchsorted(grid, locations), masses)
    p_proj = project_masses(g, locations, masses)
    penalty = 2.0 * g.lam * (q.sum() - 1.0) * (M.T @ np.ones(g.k))
    return {
        "lambda_mixture": -2.0 * M.T @ (E.T @ (G @ (p_ref - E @ q))),
        "lambda_projected": -2.0 * M.T @ (g.C_lambda @ (p_proj - q)),
        "hat_mixture": -2.0 * M.T @ (E.T @ (G0 @ (p_ref - E @ q))) + penalty,
        "hat_projected": -2.0 * M.T @ (g.C0 @ (p_proj - q)) + penalty,
    }


def mixture_loss(g, locations, masses, q, penalty="lambda"):
    """Refined-grid loss between a mixture and atom vector ``q`` (``lambda`` or ``hat``)."""
    if penalty == "lambda":
        return mixture_distance(g, locations, masses, g.atoms, q)
    if penalty == "hat":
        return (mixture_distance(g, locations, masses, g.atoms, q, penalty="centered")
                + g.lam * (np.sum(q) - 1.0) ** 2)
    raise ValueError(f"unknown penalty {penalty!r}")


def gradient_equivalence_check(g, locations, masses, M, theta, tol=1e-8):
    """True when projecting the target first leaves both loss gradients unchanged."""
    grads = mixture_gradients(g, locations, masses, M, theta)
    ok = True
    for kind in ("lambda", "hat"):
        a, b = grads[f"{kind}_mixture"], grads[f"{kind}_projected"]
        ok &= bool(np.max(np.abs(a - b)) <= tol * max(1.0, np.max(np.abs(a))))
    return ok
