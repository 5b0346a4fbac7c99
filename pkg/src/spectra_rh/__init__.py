"""Spectra, wall-crossing and Riemann-Hilbert problems from quadratic differentials."""

__version__ = "0.1.0"
