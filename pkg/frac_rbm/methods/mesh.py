"""
Meshes for the truth discretization.

The cylinder Omega x [0, y_plus] is the tensor product of a structured
triangulation of the unit square and a graded partition of [0, y_plus].
Global dof index = level * n_vertices + vertex, so every operator is a
Kronecker product (y-factor) x (x-factor). Dirichlet conditions on the
lateral boundary and on the top level are imposed by restriction to the
free dofs.
"""

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np
import scipy.sparse as sp


def _check_positive_int(name: str, value, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def _check_positive_real(name: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float, np.floating)):
        raise ValueError(f"{name} must be a real number, got {value!r}")
    if not math.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be positive and finite, got {value!r}")
    return float(value)


@dataclass(frozen=True, eq=False)
class GradedInterval:
    """Partition y_m = y_plus * (m / M)**gamma, m = 0..M, of [0, y_plus]."""

    M: int
    gamma: float
    y_plus: float
    nodes: np.ndarray

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def first_positive_node(self) -> float:
        return float(self.nodes[1])


def build_graded_partition(M: int, gamma: float, y_plus: float) -> GradedInterval:
    """
    Build the graded partition of [0, y_plus].

    Args:
        M: Number of subintervals (>= 1).
        gamma: Grading exponent (> 0); gamma = 1 is uniform.
        y_plus: Truncation height (> 0).

    Returns:
        The partition; its nodes array is read-only.

    Raises:
        ValueError: On invalid input, or if the grading underflows so that the nodes are not strictly increasing.
    """
    M = _check_positive_int("M", M)
    gamma = _check_positive_real("gamma", gamma)
    y_plus = _check_positive_real("y_plus", y_plus)

    nodes = y_plus * (np.arange(M + 1, dtype=float) / M) ** gamma
    nodes[-1] = y_plus
    if not np.all(np.diff(nodes) > 0):
        raise ValueError(f"Graded partition (M={M}, gamma={gamma}) underflows: nodes are not strictly increasing")
    nodes.flags.writeable = False
    return GradedInterval(M, gamma, y_plus, nodes)


@dataclass(frozen=True, eq=False)
class Triangulation2D:
    """
    Structured triangulation of the unit square.

    Vertex (i, j) at (i/n, j/n) has index j * (n + 1) + i. Every cell is split
    along its (0,0)-(1,1) diagonal into two counter-clockwise triangles.
    """

    n: int
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_mask: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def interior(self) -> np.ndarray:
        """Indices of the interior vertices, in increasing order."""
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def corners(self) -> np.ndarray:
        """(n_triangles, 3, 2) vertex coordinates per triangle."""
        return self.vertices[self.triangles]

    @cached_property
    def areas(self) -> np.ndarray:
        """Signed areas (all positive)."""
        c = self.corners
        d1 = c[:, 1] - c[:, 0]
        d2 = c[:, 2] - c[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def p1_matrices(self) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
        """(mass, stiffness) of continuous P1 elements over all vertices."""
        from .fem_truth import p1_matrices

        return p1_matrices(self)

    @property
    def mesh_size(self) -> float:
        return 1.0 / self.n


def build_unit_square_triangulation(n: int) -> Triangulation2D:
    """
    Structured n x n triangulation of [0, 1]^2 with 2 n^2 triangles.

    Args:
        n: Cells per side (>= 2).

    Returns:
        The triangulation.

    Raises:
        ValueError: If n < 2.
    """
    n = _check_positive_int("n", n, minimum=2)

    coords = np.arange(n + 1, dtype=float) / n
    x1, x2 = np.meshgrid(coords, coords, indexing="xy")
    vertices = np.column_stack([x1.ravel(), x2.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    on_edge = (vertices == 0.0) | (vertices == 1.0)
    boundary_mask = on_edge[:, 0] | on_edge[:, 1]

    for array in (vertices, triangles, boundary_mask):
        array.flags.writeable = False
    return Triangulation2D(n, vertices, triangles, boundary_mask)


@dataclass(frozen=True, eq=False)
class CylinderMesh:
    """
    Tensor product of a triangulation and a graded partition.

    Free dofs are the interior vertices on levels 0..M-1, ordered level-major;
    a free vector reshapes to (M, n_interior).
    """

    tri: Triangulation2D
    interval: GradedInterval

    @property
    def n_levels(self) -> int:
        return self.interval.M + 1

    @property
    def n_dofs(self) -> int:
        return self.tri.n_vertices * self.n_levels

    @property
    def n_interior(self) -> int:
        return len(self.tri.interior)

    @property
    def free_shape(self) -> Tuple[int, int]:
        return (self.interval.M, self.n_interior)

    @property
    def n_free(self) -> int:
        return self.interval.M * self.n_interior

    def global_index(self, vertex: int, level: int) -> int:
        """Global dof index of a 2D vertex on a y-level."""
        if not 0 <= vertex < self.tri.n_vertices or not 0 <= level < self.n_levels:
            raise IndexError(f"(vertex={vertex}, level={level}) outside the cylinder mesh")
        return level * self.tri.n_vertices + vertex

    @cached_property
    def free_indices(self) -> np.ndarray:
        """Global indices of the free dofs in free-vector order."""
        levels = np.arange(self.interval.M)[:, None] * self.tri.n_vertices
        return (levels + self.tri.interior[None, :]).ravel()

    @cached_property
    def free_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_dofs, dtype=bool)
        mask[self.free_indices] = True
        mask.flags.writeable = False
        return mask

    def expand(self, free_vector: np.ndarray) -> np.ndarray:
        """Embed a free-dof vector into the full dof vector (zeros on constrained dofs)."""
        full = np.zeros(self.n_dofs)
        full[self.free_indices] = free_vector
        return full

    def restrict(self, full_vector: np.ndarray) -> np.ndarray:
        return np.asarray(full_vector)[self.free_indices]


def build_cylinder_mesh(tri: Triangulation2D, interval: GradedInterval) -> CylinderMesh:
    """Tensorize a triangulation with a graded partition."""
    if not isinstance(tri, Triangulation2D) or not isinstance(interval, GradedInterval):
        raise ValueError("build_cylinder_mesh expects a Triangulation2D and a GradedInterval")
    return CylinderMesh(tri, interval)
