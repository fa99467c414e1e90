"""Numerical laboratory for the semiclassical Schrodinger propagator on the
Friedlander model of a strictly convex domain: Airy spectral machinery,
spectral and reflection-sum Green function evaluators, dispersive-decay
verification harnesses, and a split-step cubic NLS solver."""

__version__ = "0.1.0"
