"""The game layer on its own: solve a small zero-sum game exactly, then let
the bandit selector rediscover the equilibrium mixture from noisy payoffs.

Run:  python3 demos/nash_ensemble.py
"""
import numpy as np

from slicesim.game import (NashEnsemble, correlation, dual_reward,
                           solve_zero_sum)


def main():
    # a rock-paper-scissors flavoured payoff with a dash of asymmetry
    u = np.array([[0.0, 1.0, -0.5],
                  [-1.0, 0.0, 1.0],
                  [0.5, -1.0, 0.0]])
    sol = solve_zero_sum(u)
    print("payoff matrix (row maximiser):")
    print(u)
    print(f"maximin mixture {np.round(sol.sigma, 4)}  game value {sol.value:+.4f}\n")

    # the selector only sees sampled utilities, one (policy, class) pair at a
    # time, and refreshes its mixture from the running means
    rng = np.random.default_rng(4)
    bandit = NashEnsemble(3, 3, capacity=20, floor=0.05)
    bandit.history.seed_random(rng, scale=0.1)
    counts = np.zeros(3)
    for step in range(4000):
        pol = bandit.select(rng)
        opp = int(rng.integers(3))
        payoff = u[pol, opp] + rng.normal(0.0, 0.3)
        bandit.observe(pol, opp + 1, payoff)
        if step % 10 == 0:
            bandit.refresh()
        counts[pol] += 1
    print("bandit play frequencies after 4000 noisy rounds:")
    print(np.round(counts / counts.sum(), 3))
    print(f"solved mixture estimate {np.round(bandit.sigma, 3)}\n")

    # the diversity term that keeps ensemble members from collapsing together
    actions = [np.array([1, 0, 1, 0]), np.array([1, 0, 1, 0]),
               np.array([0, 1, 0, 1])]
    sigma = np.array([0.5, 0.3, 0.2])
    for k in range(3):
        corrs = np.array([correlation(actions[k], actions[j]) for j in range(3)])
        r = dual_reward(1.0, k, sigma, corrs, zeta=0.1)
        print(f"policy {k} dual reward for a unit payoff: {r:+.3f}")
    print("\nthe twins pay a similarity tax; the odd one out keeps its payoff.")


if __name__ == "__main__":
    main()
