"""Symbolic and numeric verification of symmetry classifications for
multidimensional nonlinear Schroedinger equations."""

__version__ = "0.1.0"
