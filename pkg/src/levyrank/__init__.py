"""Rank-based Levy particle systems: simulation, gaps, couplings, ergodic checks."""
__version__ = "0.1.0"
