"""
Symmetric quadrature rules on triangles.

Rules are stored in barycentric coordinates with weights normalised to sum to
one; multiply by the triangle area when integrating.
"""

from dataclasses import dataclass
from typing import Dict

import numpy as np


@dataclass(frozen=True, eq=False)
class TriangleRule:
    """Barycentric points (n, 3) and weights (n,) summing to 1, exact for polynomials of the given degree."""

    degree: int
    barycentric: np.ndarray
    weights: np.ndarray

    def physical_points(self, corners: np.ndarray) -> np.ndarray:
        """
        Map the rule onto a batch of triangles.

        Args:
            corners: (n_triangles, 3, 2) vertex coordinates.

        Returns:
            (n_triangles, n_points, 2) quadrature points.
        """
        return np.einsum("pi,tid->tpd", self.barycentric, corners)


def _orbit3(a: float) -> np.ndarray:
    """The 3 permutations of (1-2a, a, a)."""
    b = 1.0 - 2.0 * a
    return np.array([[b, a, a], [a, b, a], [a, a, b]])


def _orbit6(a: float, b: float) -> np.ndarray:
    """The 6 permutations of (a, b, 1-a-b)."""
    c = 1.0 - a - b
    return np.array([[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]])


def _rule(degree: int, orbits) -> TriangleRule:
    points = np.vstack([pts for pts, _ in orbits])
    weights = np.concatenate([np.full(len(pts), w) for pts, w in orbits])
    return TriangleRule(degree, points, weights)


# Six-point rule of degree 4 (Strang-Fix / Dunavant).
GAUSS_6 = _rule(
    4,
    [
        (_orbit3(0.445948490915965), 0.223381589678011),
        (_orbit3(0.091576213509771), 0.109951743655322),
    ],
)

# Seven-point rule of degree 5 (Radon).
_SQ15 = np.sqrt(15.0)
GAUSS_7 = _rule(
    5,
    [
        (np.array([[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]]), 0.225),
        (_orbit3((6.0 - _SQ15) / 21.0), (155.0 - _SQ15) / 1200.0),
        (_orbit3((6.0 + _SQ15) / 21.0), (155.0 + _SQ15) / 1200.0),
    ],
)

# Twelve-point rule of degree 6 (Dunavant).
GAUSS_12 = _rule(
    6,
    [
        (_orbit3(0.249286745170910), 0.116786275726379),
        (_orbit3(0.063089014491502), 0.050844906370207),
        (_orbit6(0.053145049844817, 0.310352451033784), 0.082851075618374),
    ],
)

RULES: Dict[int, TriangleRule] = {4: GAUSS_6, 5: GAUSS_7, 6: GAUSS_12}


def subdivide_reference(levels: int):
    """
    Split the reference triangle into levels**2 congruent sub-triangles.

    Returns:
        (levels**2, 3, 3) barycentric corners of the sub-triangles.
    """
    if levels < 1:
        raise ValueError(f"levels must be positive, got {levels}")
    step = 1.0 / levels
    cells = []
    for i in range(levels):
        for j in range(levels - i):
            # barycentric (l1, l2) grid coordinates, l0 = 1 - l1 - l2
            p00, p10, p01 = (i, j), (i + 1, j), (i, j + 1)
            cells.append([p00, p10, p01])
            if i + j < levels - 1:
                cells.append([p10, (i + 1, j + 1), p01])
    corners = np.array(cells, dtype=float) * step
    l0 = 1.0 - corners.sum(axis=2, keepdims=True)
    return np.concatenate([l0, corners], axis=2)


def composite_rule(rule: TriangleRule, levels: int) -> TriangleRule:
    """Composite version of a rule on a uniform levels x levels subdivision of the reference triangle."""
    if levels == 1:
        return rule
    sub = subdivide_reference(levels)
    points = np.einsum("pi,sij->spj", rule.barycentric, sub).reshape(-1, 3)
    weights = np.tile(rule.weights, len(sub)) / len(sub)
    return TriangleRule(rule.degree, points, weights)
