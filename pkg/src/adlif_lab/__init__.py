"""Numerical laboratory for adaptive leaky integrate-and-fire neurons."""

__version__ = "0.1.0"
