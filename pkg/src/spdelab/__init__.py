"""Implicit Euler Galerkin schemes for stochastic PDEs, with discrete stochastic-analysis diagnostics."""

__version__ = "0.1.0"
