"""Train S51 on the default grid world and compare with value iteration."""
import argparse

import numpy as np

from cramer_rl.control import (ACTIONS, GridWorld, S51Config, optimal_actions, train_s51,
                               value_iteration)

ARROWS = {"up": "^", "right": ">", "down": "v", "left": "<"}


def render(world, policy):
    rows = []
    for r in range(world.height):
        line = []
        for c in range(world.width):
            cell = (r, c)
            if cell in world.walls:
                line.append("#")
            elif cell in world.terminal_rewards:
                line.append("+" if world.terminal_rewards[cell] > 0 else "-")
            else:
                line.append(ARROWS[ACTIONS[policy[world.index(cell)]]])
        rows.append(" ".join(line))
    return "\n".join(rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=100_000)
    ap.add_argument("--alpha", type=float, default=1e-3)
    ap.add_argument("--lam", type=float, default=10.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--world", help="grid world JSON (default: 4x4 with one wall)")
    args = ap.parse_args()

    world = GridWorld.load(args.world) if args.world else GridWorld()
    res = train_s51(world, S51Config(lam=args.lam, alpha=args.alpha, steps=args.steps,
                                     seed=args.seed))
    Q = value_iteration(world)
    policy = res.greedy_policy()
    oracle = np.array([min(optimal_actions(Q, x)) if not world.is_terminal(x) else 0
                       for x in range(world.n_states)])
    print("S51 greedy policy:\n" + render(world, policy))
    print("\nvalue-iteration policy:\n" + render(world, oracle))
    agree = [policy[x] in optimal_actions(Q, x) for x in world.start_states]
    masses = res.masses()
    returns = np.array([r for _, r in res.episode_returns])
    tail = returns[-max(1, len(returns) // 10):]
    print(f"\nagreement {sum(agree)}/{len(agree)}; masses in "
          f"[{masses.min():.4f}, {masses.max():.4f}]; {len(returns)} episodes, "
          f"mean return over the last tenth {tail.mean():.3f}")


if __name__ == "__main__":
    main()
