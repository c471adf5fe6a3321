"""Numerical and combinatorial workbench for the operator limit of Wigner matrices."""

__version__ = "0.1.0"
