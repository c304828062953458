"""Stochastic heat and wave equations in one space dimension: simulation,
exact Gaussian theory for additive noise, and the statistics that compare them."""

__version__ = "0.1.0"
