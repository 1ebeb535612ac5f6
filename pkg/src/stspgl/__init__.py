"""Solvers for the stochastic TSP with generalized latency."""

__version__ = "0.1.0"
