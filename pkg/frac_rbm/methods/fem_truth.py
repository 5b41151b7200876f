"""
Truth finite element discretization of the extension problem on the cylinder.

Operators are Kronecker sums Y_mass (x) X_stiff + Y_stiff (x) X_mass acting on
free dofs, with the y-factors assembled in closed form from power-rule
antiderivatives of y**alpha against piecewise linear hats. The affine
operator of the EIM-based problem is sum_q Theta_q(mu) A_q with
A_q = int y**alpha_q grad u . grad v (no d_s factor) and
Theta_q(mu) = theta_q(s) / d_s.
"""

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import TYPE_CHECKING, Callable, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from loguru import logger
from scipy.sparse.linalg import LinearOperator, splu

from ..core.errors import ConvergenceError, IndefiniteOperatorError
from .mesh import CylinderMesh, GradedInterval, Triangulation2D, build_graded_partition
from .problems import Parameter, RightHandSide, Subdomain, extension_constant, fractional_exponent
from .quadrature import GAUSS_6, TriangleRule

if TYPE_CHECKING:
    from .eim import EIMModel

# Re-exported so callers can import the parameter type from here.
__all__ = [
    "Parameter",
    "KroneckerOperator",
    "AffineTruthOperator",
    "LoadVectors",
    "TruthSolution",
    "TruthProblem",
    "element_y_entries",
    "weighted_interval_matrices",
    "p1_matrices",
    "assemble_affine_components",
    "assemble_load",
    "exact_weight_operator",
    "reference_operator",
    "conjugate_gradient",
    "solve_truth",
    "solve_truth_exact_weight",
    "trace_bottom",
    "l2_norm_omega",
    "xh_norm",
]


# --- 1D weighted matrices ---


def _power_difference(a: np.ndarray, b: np.ndarray, e: float) -> np.ndarray:
    """b**e - a**e for 0 <= a < b, computed as a**e * expm1(e * log1p((b-a)/a)) where a > 0."""
    out = np.empty_like(b)
    zero = a == 0.0
    out[zero] = b[zero] ** e
    pos = ~zero
    ap = a[pos]
    out[pos] = ap**e * np.expm1(e * np.log1p((b[pos] - ap) / ap))
    return out


def _moment(a: np.ndarray, b: np.ndarray, alpha: float, k: int) -> np.ndarray:
    """int_a^b y**(alpha + k) dy."""
    e = alpha + k + 1.0
    return _power_difference(a, b, e) / e


def element_y_entries(interval: GradedInterval, alpha: float) -> np.ndarray:
    """
    Local weighted P1 entries of every element of a partition of [0, y_plus].

    Returns:
        (M, 4) array with columns m_ll, m_lr, m_rr and k, where the local mass is
        [[m_ll, m_lr], [m_lr, m_rr]] and the local stiffness is k [[1, -1], [-1, 1]].

    Raises:
        ValueError: If alpha <= -1.
    """
    alpha = float(alpha)
    if not np.isfinite(alpha) or alpha <= -1.0:
        raise ValueError(f"Weight exponent must be > -1, got {alpha}")

    a = np.asarray(interval.nodes[:-1], dtype=float)
    b = np.asarray(interval.nodes[1:], dtype=float)
    h = b - a
    i0 = _moment(a, b, alpha, 0)
    i1 = _moment(a, b, alpha, 1)
    i2 = _moment(a, b, alpha, 2)

    # hats on [a, b]: (b - y)/h and (y - a)/h
    m_ll = (b * b * i0 - 2.0 * b * i1 + i2) / (h * h)
    m_lr = (-a * b * i0 + (a + b) * i1 - i2) / (h * h)
    m_rr = (a * a * i0 - 2.0 * a * i1 + i2) / (h * h)
    return np.column_stack([m_ll, m_lr, m_rr, i0 / (h * h)])


def weighted_interval_matrices(interval: GradedInterval, alpha: float) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """
    Weighted P1 mass and stiffness matrices on a partition of [0, y_plus].

    Entries are the exact integrals int y**alpha phi_i phi_j dy and
    int y**alpha phi_i' phi_j' dy over all M + 1 nodes.

    Args:
        interval: The partition.
        alpha: Weight exponent, alpha > -1.

    Returns:
        (mass, stiffness) as tridiagonal CSR matrices of size M + 1.

    Raises:
        ValueError: If alpha <= -1.
    """
    m_ll, m_lr, m_rr, k = element_y_entries(interval, alpha).T

    size = interval.M + 1
    mass_diag = np.zeros(size)
    mass_diag[:-1] += m_ll
    mass_diag[1:] += m_rr
    stiff_diag = np.zeros(size)
    stiff_diag[:-1] += k
    stiff_diag[1:] += k

    mass = sp.diags([m_lr, mass_diag, m_lr], [-1, 0, 1], shape=(size, size), format="csr")
    stiffness = sp.diags([-k, stiff_diag, -k], [-1, 0, 1], shape=(size, size), format="csr")
    return mass, stiffness


@lru_cache(maxsize=256)
def _free_y_matrices(M: int, gamma: float, y_plus: float, alpha: float) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """Weighted 1D matrices restricted to levels 0..M-1, cached per (partition, exponent)."""
    interval = build_graded_partition(M, gamma, y_plus)
    mass, stiffness = weighted_interval_matrices(interval, alpha)
    return mass[:M, :M].tocsr(), stiffness[:M, :M].tocsr()


def free_y_matrices(interval: GradedInterval, alpha: float) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    return _free_y_matrices(interval.M, float(interval.gamma), float(interval.y_plus), float(alpha))


# --- 2D P1 matrices ---


def p1_matrices(tri: Triangulation2D) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """
    P1 mass and stiffness matrices over all vertices of a triangulation.

    Returns:
        (mass, stiffness) in CSR format.
    """
    corners = tri.corners
    area = tri.areas
    grads = np.empty((tri.n_triangles, 3, 2))
    for i in range(3):
        edge = corners[:, (i + 2) % 3] - corners[:, (i + 1) % 3]
        grads[:, i, 0] = -edge[:, 1] / (2.0 * area)
        grads[:, i, 1] = edge[:, 0] / (2.0 * area)

    local_stiff = area[:, None, None] * np.einsum("tid,tjd->tij", grads, grads)
    local_mass = area[:, None, None] * (np.ones((3, 3)) + np.eye(3))[None] / 12.0

    rows = np.repeat(tri.triangles, 3, axis=1).ravel()
    cols = np.tile(tri.triangles, (1, 3)).ravel()
    shape = (tri.n_vertices, tri.n_vertices)
    mass = sp.coo_matrix((local_mass.ravel(), (rows, cols)), shape=shape).tocsr()
    stiffness = sp.coo_matrix((local_stiff.ravel(), (rows, cols)), shape=shape).tocsr()
    return mass, stiffness


@lru_cache(maxsize=16)
def free_x_matrices(tri: Triangulation2D) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """P1 mass and stiffness restricted to interior vertices."""
    mass, stiffness = tri.p1_matrices
    idx = tri.interior
    return mass[idx][:, idx].tocsr(), stiffness[idx][:, idx].tocsr()


# --- Kronecker operators ---


@dataclass(frozen=True, eq=False)
class KroneckerOperator:
    """
    The operator y_mass (x) x_stiff + y_stiff (x) x_mass on level-major vectors.

    A vector of length n_y * n_x is viewed as an (n_y, n_x) array X and mapped to
    y_mass X x_stiff + y_stiff X x_mass (all factors symmetric).
    """

    y_mass: sp.csr_matrix
    y_stiff: sp.csr_matrix
    x_mass: sp.csr_matrix
    x_stiff: sp.csr_matrix

    @property
    def grid_shape(self) -> Tuple[int, int]:
        return (self.y_mass.shape[0], self.x_mass.shape[0])

    @property
    def size(self) -> int:
        return self.grid_shape[0] * self.grid_shape[1]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        X = np.asarray(v, dtype=float).reshape(self.grid_shape)
        Y = self.y_mass @ (self.x_stiff @ X.T).T + self.y_stiff @ (self.x_mass @ X.T).T
        return np.asarray(Y).ravel()

    def matmat(self, V: np.ndarray) -> np.ndarray:
        V = np.asarray(V, dtype=float)
        if V.ndim == 1:
            return self.matvec(V)
        return np.column_stack([self.matvec(V[:, j]) for j in range(V.shape[1])]) if V.shape[1] else V.copy()

    def quadratic_form(self, u: np.ndarray) -> float:
        return float(np.dot(u, self.matvec(u)))

    def diagonal(self) -> np.ndarray:
        return (
            np.outer(self.y_mass.diagonal(), self.x_stiff.diagonal())
            + np.outer(self.y_stiff.diagonal(), self.x_mass.diagonal())
        ).ravel()

    def to_sparse(self) -> sp.csr_matrix:
        return (sp.kron(self.y_mass, self.x_stiff) + sp.kron(self.y_stiff, self.x_mass)).tocsr()

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator((self.size, self.size), matvec=self.matvec, dtype=float)

    def scaled(self, factor: float) -> "KroneckerOperator":
        return KroneckerOperator(factor * self.y_mass, factor * self.y_stiff, self.x_mass, self.x_stiff)


def combine_y_factors(
    y_masses: Sequence[sp.csr_matrix], y_stiffs: Sequence[sp.csr_matrix], weights: np.ndarray
) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """Weighted sums of y-factors sharing one sparsity pattern."""
    mass = sum(float(w) * m for w, m in zip(weights, y_masses))
    stiff = sum(float(w) * k for w, k in zip(weights, y_stiffs))
    return sp.csr_matrix(mass), sp.csr_matrix(stiff)


class AffineTruthOperator:
    """
    Affine components A_q = int y**alpha_q grad u . grad v on free dofs.

    Args:
        mesh: Cylinder mesh.
        exponents: Weight exponents alpha_q, each > -1.
        subdomain: Subdomain the components belong to, if any.
        eim: EIM model supplying theta(s), if any.
    """

    def __init__(
        self,
        mesh: CylinderMesh,
        exponents: Sequence[float],
        subdomain: Optional[Subdomain] = None,
        eim: Optional["EIMModel"] = None,
    ):
        exponents = np.asarray(exponents, dtype=float).ravel()
        if exponents.size == 0:
            raise ValueError("An affine operator needs at least one component")
        bad = exponents[~(exponents > -1.0)]
        if bad.size:
            raise ValueError(f"Effective weight exponents must be > -1, got {bad.tolist()}")

        self.mesh = mesh
        self.exponents = exponents
        self.subdomain = subdomain
        self.eim = eim
        self.x_mass, self.x_stiff = free_x_matrices(mesh.tri)
        pairs = [free_y_matrices(mesh.interval, alpha) for alpha in exponents]
        self.y_masses = [m for m, _ in pairs]
        self.y_stiffs = [k for _, k in pairs]

    @property
    def n_components(self) -> int:
        return len(self.exponents)

    @property
    def n_free(self) -> int:
        return self.mesh.n_free

    def component(self, q: int) -> KroneckerOperator:
        return KroneckerOperator(self.y_masses[q], self.y_stiffs[q], self.x_mass, self.x_stiff)

    def combine(self, weights: Sequence[float]) -> KroneckerOperator:
        """The operator sum_q weights[q] A_q."""
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (self.n_components,):
            raise ValueError(f"Expected {self.n_components} weights, got shape {weights.shape}")
        y_mass, y_stiff = combine_y_factors(self.y_masses, self.y_stiffs, weights)
        return KroneckerOperator(y_mass, y_stiff, self.x_mass, self.x_stiff)

    def coefficients(self, mu: Parameter) -> np.ndarray:
        """Theta_q(mu) = theta_q(s) / d_s."""
        if self.eim is None:
            raise ValueError("This operator has no EIM model; use combine() with explicit weights")
        return self.eim.theta(mu.s) / extension_constant(mu.s)

    def at(self, mu: Parameter) -> KroneckerOperator:
        return self.combine(self.coefficients(mu))


def assemble_affine_components(mesh: CylinderMesh, eim: "EIMModel") -> AffineTruthOperator:
    """
    Affine operator whose components are the pure powers y**(1 - 2 s_q) of the EIM snapshots.

    On D2 the interpolated family is y * h, so dividing by y leaves the same exponents.

    Raises:
        ValueError: If the EIM y-range does not match the mesh or an exponent is <= -1.
    """
    if eim.y_grid[-1] > mesh.interval.y_plus * (1.0 + 1e-12):
        raise ValueError(
            f"EIM y-grid reaches {eim.y_grid[-1]} beyond the cylinder height {mesh.interval.y_plus}"
        )
    return AffineTruthOperator(mesh, eim.exponents, eim.subdomain, eim)


def exact_weight_operator(mesh: CylinderMesh, s: float, scaled: bool = True) -> KroneckerOperator:
    """
    Operator of the exact weight y**(1 - 2s).

    Args:
        mesh: Cylinder mesh.
        s: Fractional order.
        scaled: Divide by d_s (the bilinear form a(., .; mu)); otherwise the plain X_h energy.
    """
    x_mass, x_stiff = free_x_matrices(mesh.tri)
    y_mass, y_stiff = free_y_matrices(mesh.interval, fractional_exponent(s))
    op = KroneckerOperator(y_mass, y_stiff, x_mass, x_stiff)
    return op.scaled(1.0 / extension_constant(s)) if scaled else op


def reference_operator(mesh: CylinderMesh) -> KroneckerOperator:
    """Unweighted cylinder Dirichlet form (weight 1, the s = 1/2 operator)."""
    x_mass, x_stiff = free_x_matrices(mesh.tri)
    y_mass, y_stiff = free_y_matrices(mesh.interval, 0.0)
    return KroneckerOperator(y_mass, y_stiff, x_mass, x_stiff)


# --- Loads ---


def load_vector_2d(tri: Triangulation2D, f: Callable, rule: TriangleRule = GAUSS_6) -> np.ndarray:
    """
    P1 load vector int f phi_v over all vertices.

    Args:
        tri: Triangulation.
        f: Pointwise function f(x1, x2) on arrays.
        rule: Triangle quadrature rule.
    """
    points = rule.physical_points(tri.corners)
    values = np.broadcast_to(np.asarray(f(points[..., 0], points[..., 1]), dtype=float), points.shape[:2])
    local = tri.areas[:, None] * np.einsum("tp,p,pi->ti", values, rule.weights, rule.barycentric)
    return np.bincount(tri.triangles.ravel(), weights=local.ravel(), minlength=tri.n_vertices)


@dataclass(frozen=True, eq=False)
class LoadVectors:
    """Affine load components F_p on free dofs (rows) and the rule giving rho_p(nu)."""

    vectors: np.ndarray
    coefficient_rule: str = "constant"

    @property
    def n_components(self) -> int:
        return self.vectors.shape[0]

    def coefficients(self, nu: Optional[float]) -> np.ndarray:
        from .problems import load_coefficients

        return load_coefficients(self.coefficient_rule, nu)

    def at(self, mu: Parameter) -> np.ndarray:
        return self.coefficients(mu.nu) @ self.vectors


def assemble_load(mesh: CylinderMesh, rhs: RightHandSide, rule: TriangleRule = GAUSS_6) -> LoadVectors:
    """
    Load components supported on the bottom level: (2D load of f_p) placed on level 0.

    Args:
        mesh: Cylinder mesh.
        rhs: Right-hand side description.
        rule: Triangle quadrature rule (degree 4 by default).
    """
    vectors = np.zeros((rhs.n_components, mesh.n_free))
    interior = mesh.tri.interior
    for p, f in enumerate(rhs.components):
        vectors[p, : len(interior)] = load_vector_2d(mesh.tri, f, rule)[interior]
    vectors.flags.writeable = False
    return LoadVectors(vectors, rhs.coefficient_rule)


# --- Solver ---


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    relative_residual: float
    min_curvature: float


def conjugate_gradient(
    operator: KroneckerOperator,
    rhs: np.ndarray,
    tol: float = 1e-10,
    max_iter: Optional[int] = None,
) -> CGResult:
    """
    Jacobi-preconditioned conjugate gradients, applied matrix-free.

    Args:
        operator: SPD Kronecker operator.
        rhs: Right-hand side.
        tol: Relative residual tolerance.
        max_iter: Iteration cap; defaults to 20 * sqrt(size).

    Returns:
        CGResult with the solution and the smallest Rayleigh quotient p.Ap / p.p met.

    Raises:
        IndefiniteOperatorError: On a non-positive diagonal entry or curvature.
        ConvergenceError: If the cap is reached.
    """
    b = np.asarray(rhs, dtype=float)
    n = b.size
    if max_iter is None:
        max_iter = max(int(np.ceil(20.0 * np.sqrt(n))), 10)

    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0, float("inf"))

    diag = operator.diagonal()
    if np.any(diag <= 0.0):
        raise IndefiniteOperatorError("Operator has a non-positive diagonal entry", float(diag.min()))
    inv_diag = 1.0 / diag

    x = np.zeros(n)
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    min_curvature = float("inf")

    for k in range(1, max_iter + 1):
        Ap = operator.matvec(p)
        curvature = float(p @ Ap)
        if curvature <= 0.0:
            raise IndefiniteOperatorError(
                f"Non-positive curvature {curvature:.3e} at CG iteration {k}", curvature
            )
        min_curvature = min(min_curvature, curvature / float(p @ p))
        alpha = rz / curvature
        x += alpha * p
        r -= alpha * Ap
        rel = float(np.linalg.norm(r)) / b_norm
        if rel <= tol:
            logger.debug(f"CG converged in {k} iterations (relative residual {rel:.2e})")
            return CGResult(x, k, rel, min_curvature)
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new

    raise ConvergenceError(f"CG did not converge in {max_iter} iterations (relative residual {rel:.2e})", max_iter, rel)


@dataclass(frozen=True, eq=False)
class TruthSolution:
    """Truth coefficients on free dofs; which is "eim" for the EIM-based system and "exact" for the exact weight."""

    coeffs: np.ndarray
    mu: Parameter
    which: str
    mesh: CylinderMesh
    iterations: int = 0
    relative_residual: float = 0.0


LoadLike = Union[LoadVectors, np.ndarray]


def _load_at(load: LoadLike, mu: Parameter) -> np.ndarray:
    if isinstance(load, LoadVectors):
        return load.at(mu)
    vector = np.asarray(load, dtype=float)
    if vector.ndim != 1:
        raise ValueError("A raw load must be a single free-dof vector; use LoadVectors for affine loads")
    return vector


def solve_truth(
    op: AffineTruthOperator,
    mu: Parameter,
    load: LoadLike,
    tol: float = 1e-10,
    max_iter: Optional[int] = None,
) -> TruthSolution:
    """
    Solve sum_q Theta_q(mu) A_q u = F(mu) on free dofs.

    Raises:
        ValueError: If mu lies outside the operator's subdomain.
        IndefiniteOperatorError: If the combined operator is not positive definite.
        ConvergenceError: If CG hits its cap.
    """
    if op.subdomain is not None and not op.subdomain.contains(mu.s):
        raise ValueError(f"s = {mu.s} is outside subdomain {op.subdomain.value}")
    rhs = _load_at(load, mu)
    if rhs.shape != (op.n_free,):
        raise ValueError(f"Load has shape {rhs.shape}, expected ({op.n_free},)")
    result = conjugate_gradient(op.at(mu), rhs, tol, max_iter)
    return TruthSolution(result.x, mu, "eim", op.mesh, result.iterations, result.relative_residual)


def solve_truth_exact_weight(
    mesh: CylinderMesh,
    s: Union[float, Parameter],
    load: LoadLike,
    tol: float = 1e-10,
    max_iter: Optional[int] = None,
) -> TruthSolution:
    """Solve the exact-weight system (1/d_s) int y**(1-2s) grad u . grad v = F."""
    mu = s if isinstance(s, Parameter) else Parameter(float(s))
    rhs = _load_at(load, mu)
    if rhs.shape != (mesh.n_free,):
        raise ValueError(f"Load has shape {rhs.shape}, expected ({mesh.n_free},)")
    result = conjugate_gradient(exact_weight_operator(mesh, mu.s), rhs, tol, max_iter)
    return TruthSolution(result.x, mu, "exact", mesh, result.iterations, result.relative_residual)


# --- Traces and norms ---


def trace_bottom(sol: Union[TruthSolution, np.ndarray], mesh: Optional[CylinderMesh] = None) -> np.ndarray:
    """
    Nodal values on the bottom level y = 0, over all 2D vertices (zero on the boundary).

    Args:
        sol: Truth solution, or a free-dof vector together with its mesh.
        mesh: Required when sol is a plain vector.
    """
    if isinstance(sol, TruthSolution):
        coeffs, mesh = sol.coeffs, sol.mesh
    else:
        if mesh is None:
            raise ValueError("trace_bottom needs the mesh for a plain coefficient vector")
        coeffs = np.asarray(sol, dtype=float)
    field = np.zeros(mesh.tri.n_vertices)
    field[mesh.tri.interior] = coeffs[: mesh.n_interior]
    return field


def l2_norm_omega(field: np.ndarray, tri: Triangulation2D) -> float:
    """L2(Omega) norm of a P1 nodal field through the mass matrix."""
    mass, _ = tri.p1_matrices
    return float(np.sqrt(max(float(field @ (mass @ field)), 0.0)))


def xh_norm(sol: Union[TruthSolution, np.ndarray], s: float, mesh: Optional[CylinderMesh] = None) -> float:
    """X_h norm sqrt(int y**(1-2s) |grad u|^2) with the closed-form weighted matrices."""
    if isinstance(sol, TruthSolution):
        coeffs, mesh = sol.coeffs, sol.mesh
    else:
        if mesh is None:
            raise ValueError("xh_norm needs the mesh for a plain coefficient vector")
        coeffs = np.asarray(sol, dtype=float)
    energy = exact_weight_operator(mesh, s, scaled=False).quadratic_form(coeffs)
    return float(np.sqrt(max(energy, 0.0)))


# --- Truth context ---


@dataclass(eq=False)
class TruthProblem:
    """
    Everything needed for truth solves on one subdomain.

    Attributes:
        operator: Affine EIM-based operator.
        loads: Affine load components.
        cg_tol: Relative residual tolerance.
        cg_max_iter: CG iteration cap.
    """

    operator: AffineTruthOperator
    loads: LoadVectors
    cg_tol: float = 1e-10
    cg_max_iter: Optional[int] = None
    _reference_factor: Optional[object] = field(default=None, repr=False)

    @property
    def mesh(self) -> CylinderMesh:
        return self.operator.mesh

    @property
    def subdomain(self) -> Optional[Subdomain]:
        return self.operator.subdomain

    @property
    def n_free(self) -> int:
        return self.operator.n_free

    def solve(self, mu: Parameter) -> TruthSolution:
        return solve_truth(self.operator, mu, self.loads, self.cg_tol, self.cg_max_iter)

    def solve_exact(self, mu: Parameter) -> TruthSolution:
        return solve_truth_exact_weight(self.mesh, mu, self.loads, self.cg_tol, self.cg_max_iter)

    @cached_property
    def reference(self) -> KroneckerOperator:
        return reference_operator(self.mesh)

    def reference_solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve G_ref z = rhs (one column or a block of columns) with a cached sparse LU factorization."""
        if self._reference_factor is None:
            self._reference_factor = splu(self.reference.to_sparse().tocsc())
        return self._reference_factor.solve(np.asarray(rhs, dtype=float))
