"""Curve diffusion and elastic flow of open curves between two parallel lines."""

__version__ = "0.1.0"
