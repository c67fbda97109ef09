"""Numerical KAM iteration for lower-dimensional tori of completely degenerate Hamiltonians."""

__version__ = "0.1.0"
