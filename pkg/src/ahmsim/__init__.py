"""Numerical laboratory for qutrit simulations of the spin-1 truncated Abelian Higgs model."""

__version__ = "0.1.0"
