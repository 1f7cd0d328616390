"""Bandits with concave rewards and convex knapsack constraints:
algorithms, oracles, and a seeded simulation harness."""

__version__ = "0.1.0"
