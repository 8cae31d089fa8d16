"""Numerical laboratory for vanishing-viscosity selection in ergodic Hamilton-Jacobi problems."""

__version__ = "0.1.0"
