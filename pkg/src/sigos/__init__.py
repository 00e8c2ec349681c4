"""Numerical laboratory for oscillatory integral operators of arbitrary signature."""

__version__ = "0.1.0"
