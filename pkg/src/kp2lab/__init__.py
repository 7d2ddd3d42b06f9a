"""Numerical laboratory for periodic KP-II: dispersion algebra, Strichartz and
bilinear experiments, flat-set geometry, short-time norms and a spectral solver."""

__version__ = "0.1.0"
