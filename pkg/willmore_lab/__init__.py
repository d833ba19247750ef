"""Numerical laboratory for graph surfaces z = u(x, y) and their Willmore energy."""

__version__ = "0.1.0"
