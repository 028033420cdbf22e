"""Multiplihedra as moduli of colored trees, their quilted surfaces, A-infinity
functor relations, and a flat numerical model of the gluing analysis."""

__version__ = "0.1.0"
