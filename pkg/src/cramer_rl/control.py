"""S51: categorical Q-learning with the normalization-penalized Cramér loss on grid worlds."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .bellman import shifted_atoms
from .geometry import build_geometry, loss_hat_gradient, project_masses

ACTIONS = ("up", "right", "down", "left")
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))
TIE_ATOL = 1e-9


@dataclass(frozen=True)
class GridWorld:
    """Deterministic grid; cells are ``(row, col)`` and states index non-wall cells row-major.

    Entering a terminal cell pays its terminal reward on top of ``step_reward``
    and ends the episode.  Bumping into a wall or the border leaves the agent
    in place.
    """

    width: int = 4
    height: int = 4
    walls: frozenset = frozenset({(1, 1)})
    terminals: tuple = (((3, 3), 1.0), ((1, 3), -1.0))
    step_reward: float = 0.0
    gamma: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "walls", frozenset(tuple(c) for c in self.walls))
        object.__setattr__(self, "terminals",
                           tuple((tuple(c), float(r)) for c, r in self.terminals))
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must have positive size")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        for cell in list(self.walls) + [c for c, _ in self.terminals]:
            if not self._inside(cell):
                raise ValueError(f"cell {cell} lies outside the grid")
        if not self.terminals:
            raise ValueError("need at least one terminal cell")
        if any(c in self.walls for c, _ in self.terminals):
            raise ValueError("a terminal cell cannot be a wall")
        if not self._terminal_reachable():
            raise ValueError("no terminal cell is reachable")

    def _inside(self, cell):
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    @property
    def cells(self):
        return [(r, c) for r in range(self.height) for c in range(self.width)
                if (r, c) not in self.walls]

    @property
    def n_states(self):
        return len(self.cells)

    @property
    def n_actions(self):
        return len(ACTIONS)

    def index(self, cell):
        return self.cells.index(tuple(cell))

    @property
    def terminal_rewards(self):
        return dict(self.terminals)

    def is_terminal(self, x):
        return self.cells[x] in self.terminal_rewards

    @property
    def start_states(self):
        return [x for x in range(self.n_states) if not self.is_terminal(x)]

    def step(self, x, a):
        """``(reward, x_next, done)`` for the deterministic move ``a`` from state ``x``."""
        r0, c0 = self.cells[x]
        dr, dc = MOVES[a]
        cell = (r0 + dr, c0 + dc)
        if not self._inside(cell) or cell in self.walls:
            cell = (r0, c0)
        term = self.terminal_rewards
        reward = self.step_reward + term.get(cell, 0.0)
        return reward, self.index(cell), cell in term

    def _terminal_reachable(self):
        seen, frontier = set(), [c for c in self.cells if c not in self.terminal_rewards]
        if not frontier:
            return False
        frontier = frontier[:1]
        while frontier:
            cell = frontier.pop()
            if cell in seen:
                continue
            seen.add(cell)
            if cell in self.terminal_rewards:
                return True
            for dr, dc in MOVES:
                nxt = (cell[0] + dr, cell[1] + dc)
                if self._inside(nxt) and nxt not in self.walls:
                    frontier.append(nxt)
        return False

    def to_dict(self):
        return {
            "width": self.width,
            "height": self.height,
            "walls": sorted(list(c) for c in self.walls),
            "terminals": [[list(c), r] for c, r in self.terminals],
            "step_reward": self.step_reward,
            "gamma": self.gamma,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            width=int(doc["width"]), height=int(doc["height"]),
            walls=frozenset(tuple(c) for c in doc.get("walls", [])),
            terminals=tuple((tuple(c), float(r)) for c, r in doc["terminals"]),
            step_reward=float(doc.get("step_reward", 0.0)),
            gamma=float(doc.get("gamma", 0.9)),
        )

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


def value_iteration(world, tol=1e-12, max_iter=100_000):
    """Scalar ``Q*`` of the grid world, shape (states, actions)."""
    S, A = world.n_states, world.n_actions
    model = [[world.step(x, a) for a in range(A)] for x in range(S)]
    Q = np.zeros((S, A))
    for _ in range(max_iter):
        V = np.where([world.is_terminal(x) for x in range(S)], 0.0, Q.max(axis=1))
        new = np.array([[r + (0.0 if done else world.gamma * V[y]) for r, y, done in row]
                        for row in model])
        if np.max(np.abs(new - Q)) <= tol:
            return new
        Q = new
    raise RuntimeError("value iteration did not converge")


def optimal_actions(Q, x, atol=TIE_ATOL):
    """All actions whose value is within ``atol`` of the best at state ``x``."""
    row = Q[x]
    return set(np.flatnonzero(row >= row.max() - atol).tolist())


# -- distributional action values -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ActionValueDistribution:
    """``o(x, a) = Theta[a]^T phi(x)``; tabular when ``Phi`` is the identity."""

    Phi: np.ndarray
    Theta: np.ndarray

    @classmethod
    def tabular(cls, n_states, n_actions, init_row):
        init_row = np.asarray(init_row, dtype=float)
        Theta = np.tile(init_row, (n_actions, n_states, 1))
        return cls(np.eye(n_states), Theta)

    def dist(self, x, a):
        return self.Phi[x] @ self.Theta[a]

    def table(self):
        """All outputs as an array of shape (states, actions, k)."""
        return np.einsum("xm,amk->xak", self.Phi, self.Theta)

    def expectations(self, g, x):
        return np.einsum("m,amk,k->a", self.Phi[x], self.Theta, g.atoms)


def act_greedy(g, q, x):
    """Action with the largest predicted expectation; lowest index wins ties."""
    return int(np.argmax(q.expectations(g, x)))


class Transition(NamedTuple):
    x: int
    a: int
    r: float
    x_next: int
    done: bool


def s51_target(g, q, t, gamma):
    """Projected target: a Dirac at ``r`` when ``done``, otherwise ``r + gamma o(x', a*)``."""
    if t.done:
        return project_masses(g, [g.to_canonical(t.r)], [1.0])
    a_star = act_greedy(g, q, t.x_next)
    return project_masses(g, shifted_atoms(g, t.r, gamma), q.dist(t.x_next, a_star))


def s51_step(g, q, t, alpha, gamma):
    """One semi-gradient step on ``loss_hat(target, o(x, a))``; returns a new model."""
    if not alpha > 0:
        raise ValueError(f"step size must be positive, got {alpha}")
    target = s51_target(g, q, t, gamma)
    grad = loss_hat_gradient(g, target, q.dist(t.x, t.a))
    Theta = np.array(q.Theta, copy=True)
    Theta[t.a] -= alpha * np.outer(q.Phi[t.x], grad)
    return ActionValueDistribution(q.Phi, Theta)


# -- training --------------------------------------------------------------------------------

@dataclass(frozen=True)
class S51Config:
    k: int = 51
    lam: float = 10.0
    v_min: float = -10.0
    v_max: float = 10.0
    alpha: float = 1e-3
    epsilon: float = 0.05
    steps: int = 100_000
    max_episode_steps: int = 100
    seed: int = 0
    snapshot_every: int = 10_000


@dataclass
class S51Result:
    q: ActionValueDistribution
    geometry: object
    episode_returns: list = field(default_factory=list)   # (step, return)
    visits: np.ndarray = None
    snapshots: list = field(default_factory=list)         # (step, table)

    def greedy_policy(self):
        g = self.geometry
        return np.array([act_greedy(g, self.q, x) for x in range(self.q.Phi.shape[0])])

    def masses(self):
        return self.q.table().sum(axis=-1)


def train_s51(world, cfg=S51Config()):
    """Epsilon-greedy S51 from uniformly random non-terminal start states.

    Updates are applied in place on a private copy of the parameters; this is
    equivalent to chaining :func:`s51_step` but avoids one copy per step.
    """
    g = build_geometry(cfg.k, cfg.lam, cfg.v_min, cfg.v_max)
    rng = np.random.default_rng(cfg.seed)
    S, A = world.n_states, world.n_actions
    dirac0 = project_masses(g, [g.to_canonical(0.0)], [1.0])
    q = ActionValueDistribution.tabular(S, A, dirac0)
    Theta = np.array(q.Theta, copy=True)
    q = ActionValueDistribution(q.Phi, Theta)
    starts = world.start_states
    visits = np.zeros((S, A), dtype=int)
    result = S51Result(q=q, geometry=g, visits=visits)

    x, ret, ep_len, disc = int(rng.choice(starts)), 0.0, 0, 1.0
    for step in range(cfg.steps):
        if rng.random() < cfg.epsilon:
            a = int(rng.integers(A))
        else:
            a = act_greedy(g, q, x)
        r, y, done = world.step(x, a)
        t = Transition(x, a, r, y, done)
        target = s51_target(g, q, t, world.gamma)
        grad = loss_hat_gradient(g, target, q.dist(x, a))
        Theta[a] -= cfg.alpha * np.outer(q.Phi[x], grad)
        visits[x, a] += 1
        ret += disc * r
        disc *= world.gamma
        ep_len += 1
        if done or ep_len >= cfg.max_episode_steps:
            result.episode_returns.append((step + 1, ret))
            x, ret, ep_len, disc = int(rng.choice(starts)), 0.0, 0, 1.0
        else:
            x = y
        if cfg.snapshot_every and (step + 1) % cfg.snapshot_every == 0:
            result.snapshots.append((step + 1, q.table().copy()))
    result.q = ActionValueDistribution(q.Phi, Theta.copy())
    return result


def policy_agreement(world, result, Q_star=None):
    """Per visited non-terminal state: does the greedy action lie in the optimal set?"""
    Q_star = value_iteration(world) if Q_star is None else Q_star
    policy = result.greedy_policy()
    out = {}
    for x in world.start_states:
        if result.visits[x].sum() > 0:
            out[x] = policy[x] in optimal_actions(Q_star, x)
    return out
