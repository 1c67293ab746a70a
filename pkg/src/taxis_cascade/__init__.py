"""Finite-volume simulator for a two-species taxis cascade on a nutrient field.

A forager population climbs the nutrient gradient, an exploiter population
climbs the forager gradient, and the nutrient is consumed, decays and is
resupplied.  The package integrates the (optionally regularized) system with
a positivity-preserving IMEX scheme and ships a monitor suite that checks
mass ceilings, a nutrient supersolution, window integrals, decay detection
and eventual-regularity proxies at runtime.
"""

from taxis_cascade.grid import Grid

__all__ = ["Grid"]
__version__ = "0.1.0"
