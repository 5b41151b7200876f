"""
Certified reduced-basis solvers for the parameterized spectral fractional Laplacian.

This package provides the extension-based truth solver on a graded cylinder,
piecewise empirical interpolation of the singular weight, greedy reduced-basis
training, a-posteriori certification and an analytic sine-mode oracle, driven
from a command line front end.
"""

__all__ = []

# Components are imported directly where needed (e.g., in driver.py)
