"""Numerical toolkit for blowup in the inhomogeneous mass-critical half-wave equation."""

__version__ = "0.1.0"
