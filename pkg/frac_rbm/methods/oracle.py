"""
Analytic sine-mode oracle on the unit square.

Modes phi_jk = 2 sin(j pi x1) sin(k pi x2) are L2-orthonormal eigenfunctions
of the Dirichlet Laplacian with eigenvalues lambda_jk = pi^2 (j^2 + k^2).
"""

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from loguru import logger

from .mesh import Triangulation2D
from .quadrature import GAUSS_12, composite_rule


def eigenvalues(J: int) -> np.ndarray:
    """(J, J) array of pi^2 (j^2 + k^2), j, k = 1..J."""
    idx = np.arange(1, J + 1, dtype=float)
    return np.pi**2 * (idx[:, None] ** 2 + idx[None, :] ** 2)


@dataclass(frozen=True, eq=False)
class ModalField:
    """Sine coefficients u_jk stored at [j-1, k-1]."""

    coefficients: np.ndarray
    tail_estimate: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"Modal coefficients must be a square array, got shape {c.shape}")
        object.__setattr__(self, "coefficients", c)

    @property
    def J(self) -> int:
        return self.coefficients.shape[0]

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.coefficients**2)))

    def padded(self, J: int) -> "ModalField":
        """Same field with coefficients zero-padded (or cut) to J modes per axis."""
        out = np.zeros((J, J))
        m = min(J, self.J)
        out[:m, :m] = self.coefficients[:m, :m]
        return ModalField(out, self.tail_estimate)

    def evaluate(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        """Pointwise values sum_jk u_jk phi_jk(x1, x2)."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        idx = np.arange(1, self.J + 1)
        s1 = np.sin(np.pi * x1[..., None] * idx)
        s2 = np.sin(np.pi * x2[..., None] * idx)
        return 2.0 * np.einsum("...j,jk,...k->...", s1, self.coefficients, s2)

    def __sub__(self, other: "ModalField") -> "ModalField":
        J = max(self.J, other.J)
        return ModalField(self.padded(J).coefficients - other.padded(J).coefficients)


def spectral_solve(f: ModalField, s: float) -> ModalField:
    """Exact modal solution of (-Laplace)^s u = f: u_jk = f_jk lambda_jk^-s."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s must lie in [0, 1], got {s}")
    return ModalField(f.coefficients * eigenvalues(f.J) ** (-s))


def apply_fractional_laplacian(u: ModalField, s: float) -> ModalField:
    """(-Laplace)^s u in modal form: lambda_jk^s u_jk."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s must lie in [0, 1], got {s}")
    return ModalField(u.coefficients * eigenvalues(u.J) ** s)


def project_to_modes(field: np.ndarray, tri: Triangulation2D, J: int) -> ModalField:
    """
    Sine coefficients <u_h, phi_jk> of a P1 nodal field.

    Integrals use the degree-6 rule on each triangle, subdivided until
    J * h <= 1 on every sub-triangle.

    Args:
        field: Nodal values over all vertices.
        tri: Triangulation.
        J: Modes per axis.

    Returns:
        ModalField with a Parseval-based tail estimate.
    """
    if J < 1:
        raise ValueError(f"J must be positive, got {J}")
    field = np.asarray(field, dtype=float)
    if field.shape != (tri.n_vertices,):
        raise ValueError(f"Field has shape {field.shape}, expected ({tri.n_vertices},)")

    levels = max(1, int(math.ceil(J * tri.mesh_size)))
    rule = composite_rule(GAUSS_12, levels)
    points = rule.physical_points(tri.corners)
    values = np.einsum("ti,pi->tp", field[tri.triangles], rule.barycentric)
    weights = tri.areas[:, None] * rule.weights[None, :]

    idx = np.arange(1, J + 1)
    s1 = np.sin(np.pi * points[..., 0, None] * idx)
    s2 = np.sin(np.pi * points[..., 1, None] * idx)
    coefficients = 2.0 * np.einsum("tp,tpj,tpk->jk", weights * values, s1, s2)

    mass, _ = tri.p1_matrices
    norm_sq = float(field @ (mass @ field))
    tail = max(norm_sq - float(np.sum(coefficients**2)), 0.0)
    return ModalField(coefficients, tail)


def parseval_defect(field: np.ndarray, tri: Triangulation2D, J: int) -> float:
    """Relative gap between the mass-matrix L2 norm squared and the sum of squared modal coefficients."""
    mass, _ = tri.p1_matrices
    norm_sq = float(field @ (mass @ field))
    if norm_sq == 0.0:
        return 0.0
    modal = project_to_modes(field, tri, J)
    return abs(norm_sq - modal.l2_norm() ** 2) / norm_sq


def hs_norm(
    u: Union[ModalField, np.ndarray], s: float, tri: Optional[Triangulation2D] = None, J: int = 20
) -> float:
    """
    (sum lambda_jk^s u_jk^2)^(1/2).

    A nodal field is projected first (needs tri and J). The L2 mass beyond the
    resolved modes is reported at debug level as a lower bound on the
    truncated part, weighted by the smallest unresolved eigenvalue.
    """
    if not isinstance(u, ModalField):
        if tri is None:
            raise ValueError("hs_norm needs the triangulation for a nodal field")
        u = project_to_modes(u, tri, J)
    value = float(np.sqrt(np.sum(eigenvalues(u.J) ** s * u.coefficients**2)))
    if u.tail_estimate > 0.0:
        tail = np.sqrt((np.pi**2 * ((u.J + 1) ** 2 + 1)) ** s * u.tail_estimate)
        logger.debug(f"H^s norm {value:.6e}, truncated tail at least {tail:.3e}")
    return value


def hs_tail_estimate(u: ModalField, s: float) -> float:
    """Lower estimate of the H^s contribution of modes beyond J from the L2 tail."""
    return float(np.sqrt((np.pi**2 * ((u.J + 1) ** 2 + 1)) ** s * u.tail_estimate))


def mode_resolution_ok(J: int, tri: Triangulation2D) -> bool:
    """Whether the mesh resolves J modes per axis without quadrature subdivision (J h <= 1)."""
    ok = J * tri.mesh_size <= 1.0
    if not ok:
        logger.warning(f"J = {J} modes are not resolved by the mesh (J h = {J * tri.mesh_size:.2f} > 1)")
    return ok
