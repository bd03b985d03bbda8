"""Cauchy problem for Lorentzian manifolds with a parallel null vector field."""

__version__ = "0.1.0"
