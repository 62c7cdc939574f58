import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cramer_rl.bellman import (ProjectedBellman, SampleTransition, apply_bellman_projected,
                               apply_reset_operator, bellman_mixture, reset_mass,
                               run_mixture_updates, sample_bellman_target, sample_transition,
                               shift_matrix, shifted_atoms, tabular_mixture_update)
from cramer_rl.geometry import (build_geometry, cramer_project_support, expected_return,
                                mass_matrix, xi_norm_sq)
from cramer_rl.mdp import (FiniteMDP, deterministic_rewards, random_mdp, return_bounds,
                           stationary_distribution)
from cramer_rl.linear_fa import StepSchedule


def one_state(reward=0.0, gamma=0.5):
    return FiniteMDP(P=[[1.0]], rewards=deterministic_rewards([reward]), gamma=gamma)


def random_case(seed, n=4, k=11, gamma=0.9):
    m = random_mdp(n, seed, gamma)
    g = build_geometry(k, 1.0, *return_bounds(m))
    return m, g


def test_shifted_atoms_canonical():
    g = build_geometry(5, 1.0, -2, 2)
    np.testing.assert_allclose(shifted_atoms(g, 1.0, 0.5), [0, 0.5, 1, 1.5, 2])
    h = build_geometry(5, 1.0, 0, 8)           # center 4, spacing 2
    locs = shifted_atoms(h, 1.0, 0.5)
    np.testing.assert_allclose(h.from_canonical(locs), 1.0 + 0.5 * h.atoms_original)


def test_halving_example():
    # k = 3, reward 0, gamma 1/2: mass on the top atom lands halfway down
    g = build_geometry(3, 1.0)
    out = apply_bellman_projected(one_state(0.0, 0.5), g, [[0, 0, 1]])
    np.testing.assert_allclose(out, [[0, 0.5, 0.5]], atol=1e-12)


def test_shift_matrix_rows_are_projections():
    g = build_geometry(7, 1.0, -3, 3)
    S = shift_matrix(g, 0.4, 0.7)
    locs = shifted_atoms(g, 0.4, 0.7)
    for j in range(g.k):
        np.testing.assert_allclose(S[j], cramer_project_support(g, [(locs[j], 1.0)]))


@pytest.mark.parametrize("seed", range(5))
def test_operator_matches_mixture_projection(seed):
    m, g = random_case(seed)
    P = np.random.default_rng(seed).normal(size=(m.n, g.k))
    fast = ProjectedBellman(m, g)(P)
    for x in range(m.n):
        slow = cramer_project_support(g, bellman_mixture(m, g, P, x))
        np.testing.assert_allclose(fast[x], slow, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
def test_operator_is_linear(seed, a, b):
    m, g = random_case(seed % 50, n=3, k=7)
    rng = np.random.default_rng(seed)
    P, Q = rng.normal(size=(2, m.n, g.k))
    op = ProjectedBellman(m, g)
    np.testing.assert_allclose(op(a * P + b * Q), a * op(P) + b * op(Q), atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_mass_bookkeeping(seed):
    # row mass after the backup is the P-average of the old masses
    m, g = random_case(seed)
    P = np.random.default_rng(seed).normal(size=(m.n, g.k))
    out = ProjectedBellman(m, g)(P)
    np.testing.assert_allclose(out.sum(axis=1), m.P @ P.sum(axis=1), atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_mean_recursion_without_clamping(seed):
    m, g = random_case(seed)
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(g.k), size=m.n)
    out = ProjectedBellman(m, g)(P)
    np.testing.assert_allclose(expected_return(g, out),
                               m.mean_rewards + m.gamma * m.P @ expected_return(g, P),
                               atol=1e-10)
    assert ProjectedBellman(m, g).clamped_mass(P).max() == 0


def test_clamped_mass_detected():
    g = build_geometry(5, 1.0, -2, 2)
    op = ProjectedBellman(one_state(1.5, 0.9), g)
    P = np.zeros((1, 5))
    P[0, -1] = 1.0                 # 1.5 + 0.9 * 2 = 3.3 > 2
    assert op.clamped_mass(P)[0] == pytest.approx(1.0)
    np.testing.assert_allclose(op(P), [[0, 0, 0, 0, 1]])


def test_table_shape_checked():
    g = build_geometry(5, 1.0)
    with pytest.raises(ValueError):
        ProjectedBellman(one_state(), g)(np.zeros((2, 5)))


# -- reset operator ------------------------------------------------------------------------

@given(st.integers(0, 10_000))
def test_reset_mass_properties(seed):
    g = build_geometry(9, 1.0)
    T = np.random.default_rng(seed).normal(size=(3, 9))
    R = reset_mass(g, T)
    np.testing.assert_allclose(R.sum(axis=1), 1, atol=1e-12)
    # the centered part is untouched
    np.testing.assert_allclose(R @ g.Pi_e_perp, T @ g.Pi_e_perp, atol=1e-12)
    np.testing.assert_allclose(reset_mass(g, R), R, atol=1e-12)


def test_reset_operator_on_proper_tables():
    m, g = random_case(2)
    P = np.random.default_rng(0).dirichlet(np.ones(g.k), size=m.n)
    np.testing.assert_allclose(apply_reset_operator(m, g, P), apply_bellman_projected(m, g, P),
                               atol=1e-12)


# -- contraction facts ------------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("gamma", [0.5, 0.9, 0.99])
def test_equal_mass_contraction(seed, gamma):
    m, g = random_case(seed, n=5, k=11, gamma=gamma)
    xi = stationary_distribution(m)
    rng = np.random.default_rng(seed)
    P, Q = rng.normal(size=(2, m.n, g.k))
    Q += (P.sum(axis=1) - Q.sum(axis=1))[:, None] / g.k
    op = ProjectedBellman(m, g)
    lhs = xi_norm_sq(xi, op(P) - op(Q), g.C_lambda)
    rhs = gamma * xi_norm_sq(xi, P - Q, g.C_lambda)
    assert lhs <= rhs + 1e-10 * max(1.0, rhs)


@pytest.mark.parametrize("seed", range(20))
def test_mass_part_never_expands(seed):
    m, g = random_case(seed, n=5)
    xi = stationary_distribution(m)
    D = np.random.default_rng(seed).normal(size=(m.n, g.k))
    op = ProjectedBellman(m, g)
    ee = mass_matrix(g)
    assert xi_norm_sq(xi, op(D), ee) <= xi_norm_sq(xi, D, ee) + 1e-12


def test_centered_contraction_fails_for_unequal_masses():
    # a difference with nonzero mass and no centered part: the backup creates one
    g = build_geometry(3, 1.0)
    m = one_state(0.0, 0.5)
    D = np.full((1, 3), 1 / 3)
    AAt = g.A @ g.A.T
    op = ProjectedBellman(m, g)
    lhs = xi_norm_sq([1.0], op(D), AAt)
    rhs = m.gamma * xi_norm_sq([1.0], D, AAt)
    assert lhs == pytest.approx(1 / 18, abs=1e-14)
    assert rhs == pytest.approx(0, abs=1e-14)


# -- sampled updates ------------------------------------------------------------------------------

def test_sample_transition_respects_model():
    m = FiniteMDP(P=[[0, 1], [1, 0]], rewards=((np.array([2.0]), np.array([1.0])),
                                              (np.array([-1.0, 1.0]), np.array([0.0, 1.0]))),
                  gamma=0.5)
    rng = np.random.default_rng(0)
    assert sample_transition(m, 0, rng) == SampleTransition(0, 2.0, 1)
    assert sample_transition(m, 1, rng) == SampleTransition(1, 1.0, 0)


def test_sample_target_example():
    g = build_geometry(5, 1.0, -2, 2)
    P = np.zeros((2, 5))
    P[1, 2] = 1.0                        # Dirac at 0 in state 1
    target = sample_bellman_target(g, P, SampleTransition(0, 0.5, 1), 0.9)
    np.testing.assert_allclose(target, [0, 0, 0.5, 0.5, 0])


def test_tabular_update_mixes_one_row():
    g = build_geometry(5, 1.0, -2, 2)
    P = np.zeros((2, 5))
    P[:, 2] = 1.0
    t = SampleTransition(0, 1.0, 1)
    out = tabular_mixture_update(g, P, t, 0.9, 0.25)
    np.testing.assert_allclose(out[0], [0, 0, 0.75, 0.25, 0])
    np.testing.assert_array_equal(out[1], P[1])
    with pytest.raises(ValueError):
        tabular_mixture_update(g, P, t, 0.9, 0.0)
    with pytest.raises(ValueError):
        tabular_mixture_update(g, P, t, 0.9, 1.5)


def test_run_updates_matches_step_by_step():
    # deterministic chain and rewards: the sampled path is known in advance
    m = FiniteMDP(P=[[0, 1, 0], [0, 0, 1], [1, 0, 0]],
                  rewards=deterministic_rewards([1.0, 0.0, -1.0]), gamma=0.8)
    g = build_geometry(11, 1.0, *return_bounds(m))
    P0 = np.random.default_rng(1).dirichlet(np.ones(g.k), size=3)
    sched = StepSchedule(0.5, 10)
    fast = run_mixture_updates(m, g, P0, sched, 60, seed=3)
    slow, x = P0.copy(), 0
    for t in range(60):
        tr = SampleTransition(x, m.mean_rewards[x], (x + 1) % 3)
        slow = tabular_mixture_update(g, slow, tr, m.gamma, sched(t))
        x = tr.x_next
    np.testing.assert_allclose(fast, slow, atol=1e-12)


def test_run_updates_rejects_bad_steps():
    m = one_state(0.0, 0.5)
    g = build_geometry(3, 1.0)
    with pytest.raises(ValueError):
        run_mixture_updates(m, g, np.ones((1, 3)) / 3, lambda t: 2.0, 5, seed=0)
