"""
A-posteriori certification of reduced solutions.

All dual norms are taken with respect to the mu-independent reference inner
product G_ref, the unweighted cylinder Dirichlet form (the operator at s = 1/2).
For the trace error e of a reduced solution,

    ||tr e||_{H^s} <= d_s^(-1/2) ||e||_{X_h} = a(e, e; mu)^(1/2)
                   <= Lambda(mu)^(1/2) ||e||_G <= Lambda(mu)^(1/2) ||r||_{G'} / beta_LB(mu),

where Lambda(mu) bounds the Rayleigh quotient of sum_q Theta_q A_q against G
from above and beta_LB(mu) bounds it from below (SCM, sharpened by local bounds
of the interpolated weight on each y-element). The d_s factors of
the trace estimate cancel against ||e||^2_{X_h} = d_s a(e, e; mu).

The residual dual norm is evaluated from a factor K of the Riesz
representers orthonormalized in G_ref, ||r|| = ||K w(mu)||_2 with
w(mu) = [rho_p(nu), -Theta_q(mu) c_n], which avoids the square-root loss of
accuracy of the expanded quadratic form.
"""

import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as sla
from loguru import logger
from scipy.optimize import linprog
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh

from ..core.errors import ConvergenceError, IndefiniteOperatorError, InfeasibleProgramError, NumericalError
from .eim import EIMModel
from .fem_truth import (
    AffineTruthOperator,
    KroneckerOperator,
    TruthProblem,
    TruthSolution,
    element_y_entries,
    exact_weight_operator,
    reference_operator,
    trace_bottom,
    xh_norm,
)
from .mesh import CylinderMesh
from .oracle import hs_norm
from .problems import Parameter, Subdomain, extension_constant

if TYPE_CHECKING:
    from .rbm import OnlineSolution, ReducedModel

# Relative slack applied to SCM constraints and box bounds before solving the LP.
SCM_SLACK = 1e-10


# --- Riesz representers ---


class RieszBuilder:
    """
    Incrementally G_ref-orthonormalizes Riesz representers z = G^-1 r.

    Column j of the factor holds the coordinates of representer j in the
    orthonormal set, so that ||sum_j w_j z_j||_G = ||factor @ w||_2.

    Args:
        truth: Truth problem providing the reference solver.
        drop_tol: Representers whose remainder falls below drop_tol times their norm add no new direction.
        max_passes: Upper limit on Gram-Schmidt passes per representer.
    """

    def __init__(self, truth: TruthProblem, drop_tol: float = 1e-11, max_passes: int = 4):
        self.truth = truth
        self.drop_tol = drop_tol
        self.max_passes = max_passes
        n = truth.n_free
        self._capacity = 16
        self._basis = np.zeros((n, self._capacity))
        self._g_basis = np.zeros((n, self._capacity))
        self._rank = 0
        self._columns: List[np.ndarray] = []

    @property
    def rank(self) -> int:
        return self._rank

    @property
    def n_columns(self) -> int:
        return len(self._columns)

    @property
    def basis(self) -> np.ndarray:
        """(n_free, rank) G_ref-orthonormal representer basis."""
        return self._basis[:, : self._rank]

    def _grow(self):
        self._capacity *= 2
        for name in ("_basis", "_g_basis"):
            old = getattr(self, name)
            new = np.zeros((old.shape[0], self._capacity))
            new[:, : self._rank] = old[:, : self._rank]
            setattr(self, name, new)

    def add(self, residual_vectors: np.ndarray):
        """
        Add representers of the given functionals (columns of residual_vectors).

        Each representer is orthogonalized against the current set with repeated
        classical Gram-Schmidt; the Gram image G z is recomputed after every pass
        so that the stored pairs stay consistent.

        Args:
            residual_vectors: (n_free, k) array; column j is the vector r_j with z_j = G^-1 r_j.
        """
        R = np.asarray(residual_vectors, dtype=float)
        if R.ndim == 1:
            R = R[:, None]
        Z = self.truth.reference_solve(R)
        if Z.ndim == 1:
            Z = Z[:, None]
        G = self.truth.reference

        for j in range(R.shape[1]):
            z = Z[:, j].copy()
            gz = G.matvec(z)
            norm0 = math.sqrt(max(float(z @ gz), 0.0))
            coords = np.zeros(self._rank)
            remainder = norm0
            for _ in range(self.max_passes):
                if self._rank == 0 or remainder == 0.0:
                    break
                c = self._g_basis[:, : self._rank].T @ z
                z -= self._basis[:, : self._rank] @ c
                coords += c
                gz = G.matvec(z)
                previous, remainder = remainder, math.sqrt(max(float(z @ gz), 0.0))
                if remainder >= 0.5 * previous:
                    break
            independent = norm0 > 0.0 and remainder > self.drop_tol * norm0
            if independent and self._rank < self.truth.n_free:
                if self._rank == self._capacity:
                    self._grow()
                self._basis[:, self._rank] = z / remainder
                self._g_basis[:, self._rank] = gz / remainder
                self._rank += 1
                coords = np.append(coords, remainder)
            self._columns.append(coords)

    def factor(self) -> np.ndarray:
        """(rank, n_columns) factor with upper-trapezoidal structure."""
        K = np.zeros((self._rank, len(self._columns)))
        for j, coords in enumerate(self._columns):
            K[: len(coords), j] = coords
        return K


def residual_weights(model: "ReducedModel", mu: Parameter, c_orth: np.ndarray) -> np.ndarray:
    """w(mu) = [rho_p(nu), -Theta_q(mu) c_n] in the column order of the Riesz factor (loads, then n-major, q-minor)."""
    rho = model.load_coefficients(mu)
    theta = model.coefficients(mu)
    return np.concatenate([rho, -np.outer(c_orth, theta).ravel()])


def residual_dual_norm(
    model: "ReducedModel",
    mu: Parameter,
    solution: Optional["OnlineSolution"] = None,
    method: str = "factor",
) -> float:
    """
    ||r(.; mu)|| in the G_ref-dual norm.

    Args:
        model: Reduced model carrying the Riesz factor.
        mu: Parameter.
        solution: Online solution at mu; solved when omitted.
        method: "factor" (default) or "quadratic" for the expanded quadratic form.

    Raises:
        ValueError: If the model has no Riesz data or the method is unknown.
        NumericalError: If the quadratic form is negative beyond round-off.
    """
    if model.riesz_factor is None:
        raise ValueError("The reduced model carries no Riesz data")
    if solution is None:
        solution = model.solve(mu)
    w = residual_weights(model, mu, solution.c_orth)
    K = model.riesz_factor

    if method == "factor":
        return float(np.linalg.norm(K @ w))
    if method != "quadratic":
        raise ValueError(f"Unknown method '{method}'")

    gram = K.T @ K
    radicand = float(w @ gram @ w)
    if radicand >= 0.0:
        return math.sqrt(radicand)
    scale = float(np.abs(w) @ np.abs(gram) @ np.abs(w))
    if abs(radicand) < 1e-14 * scale:
        logger.warning(f"Residual radicand {radicand:.3e} clamped at 0 (scale {scale:.3e}); ill-conditioned expansion")
        return 0.0
    raise NumericalError(f"Negative residual radicand {radicand:.3e} beyond round-off (scale {scale:.3e})")


def residual_dual_norm_direct(truth: TruthProblem, model: "ReducedModel", mu: Parameter) -> float:
    """Truth-sized evaluation: r = F - A(mu) U_N, z = G^-1 r, sqrt(z . r)."""
    solution = model.solve(mu)
    U = model.basis @ solution.c_orth if model.N else np.zeros(truth.n_free)
    r = truth.loads.at(mu) - truth.operator.at(mu).matvec(U)
    z = truth.reference_solve(r)
    return math.sqrt(max(float(z @ r), 0.0))


# --- Generalized eigenvalues ---


def _dense(op: KroneckerOperator) -> np.ndarray:
    return op.to_sparse().toarray()


def smallest_eigenpair(
    A: KroneckerOperator, G: KroneckerOperator, dense_limit: int = 1500, tol: float = 1e-8
) -> Tuple[float, np.ndarray]:
    """
    Smallest eigenpair of A v = lambda G v (A symmetric positive definite, G SPD).

    Dense LAPACK up to dense_limit unknowns, shift-invert Lanczos about 0 beyond.

    Raises:
        ConvergenceError: If ARPACK fails.
    """
    if A.size <= dense_limit:
        values, vectors = sla.eigh(_dense(A), _dense(G), subset_by_index=[0, 0])
        return float(values[0]), vectors[:, 0]
    try:
        values, vectors = eigsh(A.to_sparse().tocsc(), k=1, M=G.to_sparse().tocsc(), sigma=0.0, which="LM", tol=tol)
    except (ArpackNoConvergence, ArpackError) as e:
        raise ConvergenceError(f"Smallest generalized eigenvalue did not converge: {e}") from e
    return float(values[0]), vectors[:, 0]


def generalized_extremes(
    A: KroneckerOperator, G: KroneckerOperator, dense_limit: int = 1500, tol: float = 1e-8
) -> Tuple[float, float]:
    """(lambda_min, lambda_max) of the pencil (A, G)."""
    if A.size <= dense_limit:
        values = sla.eigh(_dense(A), _dense(G), eigvals_only=True)
        return float(values[0]), float(values[-1])
    lam_min, _ = smallest_eigenpair(A, G, dense_limit, tol)
    try:
        lam_max = eigsh(A.to_sparse().tocsc(), k=1, M=G.to_sparse().tocsc(), which="LA", tol=tol,
                        return_eigenvectors=False)
    except (ArpackNoConvergence, ArpackError) as e:
        raise ConvergenceError(f"Largest generalized eigenvalue did not converge: {e}") from e
    return lam_min, float(lam_max[0])


# --- SCM ---


def _element_extremes(weighted: np.ndarray, reference: np.ndarray) -> Tuple[float, float]:
    """
    Bounds (lo, hi) with lo G <= A <= hi G from the local y-element matrices.

    Both operators are sums over y-elements of M_e (x) X_stiff + k_e L (x) X_mass
    with positive semi-definite x-factors, so the extreme generalized eigenvalues
    of the 2 x 2 local pencils (and the stiffness ratios) bound the global pencil.
    The top element keeps only its lower node, the upper one being Dirichlet.
    """
    a, b, c, k = weighted.T
    a1, b1, c1, k1 = reference.T
    # det(M_w - lam M_1) = A lam^2 + B lam + C
    A = a1 * c1 - b1 * b1
    B = -(a * c1 + c * a1 - 2.0 * b * b1)
    C = a * c - b * b
    disc = np.sqrt(np.maximum(B * B - 4.0 * A * C, 0.0))
    upper = (-B + disc) / (2.0 * A)
    with np.errstate(divide="ignore", invalid="ignore"):
        lower = np.where(-B + disc > 0.0, 2.0 * C / (-B + disc), (-B - disc) / (2.0 * A))
    lower[-1] = upper[-1] = a[-1] / a1[-1]
    stiff = k / k1
    return float(np.minimum(lower, stiff).min()), float(np.maximum(upper, stiff).max())


@dataclass(frozen=True, eq=False)
class SCMModel:
    """
    Successive-constraint data for one subdomain.

    Attributes:
        eim: EIM model providing Theta(s).
        sigma_lower, sigma_upper: Box [sigma_q-, sigma_q+] of Rayleigh quotients of A_q against G_ref.
        constraint_s: Parameters of the constraint points (Theta depends on s only).
        constraint_betas: Exact smallest generalized eigenvalues at the constraint points.
        constraint_rayleigh: (K, Q) component Rayleigh quotients of the minimizing eigenvectors.
        element_weighted: (Q, M, 4) local y-element entries of A_q (see element_y_entries).
        element_reference: (M, 4) local y-element entries of G_ref.
    """

    eim: EIMModel
    sigma_lower: np.ndarray
    sigma_upper: np.ndarray
    constraint_s: np.ndarray
    constraint_betas: np.ndarray
    constraint_rayleigh: np.ndarray
    element_weighted: np.ndarray
    element_reference: np.ndarray

    @property
    def subdomain(self) -> Subdomain:
        return self.eim.subdomain

    @property
    def n_constraints(self) -> int:
        return len(self.constraint_s)

    def coefficients(self, s: Union[float, np.ndarray]) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        d = np.array([extension_constant(float(v)) for v in s])
        return self.eim.theta_many(s) / d[:, None]

    def with_constraints(self, k: int) -> "SCMModel":
        """The same model restricted to its first k constraint points."""
        return replace(
            self,
            constraint_s=self.constraint_s[:k],
            constraint_betas=self.constraint_betas[:k],
            constraint_rayleigh=self.constraint_rayleigh[:k],
        )

    def element_bounds(self, mu: Parameter) -> Tuple[float, float]:
        """Element-wise (lower, upper) bounds of the Rayleigh quotient of the interpolated operator at mu."""
        theta = self.coefficients(mu.s)[0]
        return _element_extremes(np.tensordot(theta, self.element_weighted, axes=1), self.element_reference)

    def continuity_bound(self, mu: Parameter) -> float:
        """Lambda(mu): the smaller of sum_q max(Theta_q sigma_q+, Theta_q sigma_q-) and the element-wise bound."""
        theta = self.coefficients(mu.s)[0]
        box = float(np.sum(np.maximum(theta * self.sigma_upper, theta * self.sigma_lower)))
        _, element = self.element_bounds(mu)
        return min(box, element * (1.0 + SCM_SLACK))

    def upper_bound(self, mu: Parameter) -> float:
        """min over constraint vectors of the Rayleigh quotient at mu (an upper bound of beta_hat)."""
        theta = self.coefficients(mu.s)[0]
        return float(np.min(self.constraint_rayleigh @ theta))


def _scm_lp(theta: np.ndarray, scm: SCMModel) -> float:
    lower = scm.sigma_lower - SCM_SLACK * np.abs(scm.sigma_lower)
    upper = scm.sigma_upper + SCM_SLACK * np.abs(scm.sigma_upper)
    A_ub = b_ub = None
    if scm.n_constraints:
        thetas_k = scm.coefficients(scm.constraint_s)
        A_ub = -thetas_k
        b_ub = -(scm.constraint_betas - SCM_SLACK * np.abs(scm.constraint_betas))
    result = linprog(theta, A_ub=A_ub, b_ub=b_ub, bounds=list(zip(lower, upper)), method="highs")
    if result.status != 0:
        raise InfeasibleProgramError(f"SCM linear program failed: {result.message}")
    return float(result.fun)


def _lower_bound(theta: np.ndarray, scm: SCMModel) -> float:
    element, _ = _element_extremes(np.tensordot(theta, scm.element_weighted, axes=1), scm.element_reference)
    return max(_scm_lp(theta, scm), element - SCM_SLACK * abs(element))


def scm_lower_bound(scm: SCMModel, mu: Parameter) -> float:
    """
    beta_LB(mu): the larger of the LP bound and the element-wise bound.

    The LP minimizes Theta(mu) . x over the box subject to
    Theta(mu_k) . x >= beta_hat(mu_k); the element-wise bound is the smallest
    local generalized eigenvalue of the interpolated weight against the unit weight.

    Raises:
        InfeasibleProgramError: If the linear program has no solution.
    """
    return _lower_bound(scm.coefficients(mu.s)[0], scm)


def _component_rayleigh(op: AffineTruthOperator, G: KroneckerOperator, v: np.ndarray) -> np.ndarray:
    g = G.quadratic_form(v)
    return np.array([op.component(q).quadratic_form(v) / g for q in range(op.n_components)])


def scm_build(
    op: AffineTruthOperator,
    training: Sequence[Union[Parameter, float]],
    n_constraints: int = 12,
    dense_limit: int = 1500,
    tol: float = 1e-8,
) -> SCMModel:
    """
    Box bounds per component plus greedily chosen constraint points.

    Each step solves one exact eigenproblem at the training point with the
    largest relative gap between the Rayleigh upper bound and the lower bound.

    Args:
        op: Affine operator with an EIM model.
        training: Training parameters (or values of s).
        n_constraints: Number of constraint points.
        dense_limit: Largest system solved with dense LAPACK.
        tol: ARPACK tolerance.

    Raises:
        ConvergenceError: If an eigen-solve fails (the component is named).
    """
    if op.eim is None:
        raise ValueError("SCM needs an operator with an EIM model")
    if n_constraints < 1:
        raise ValueError(f"n_constraints must be positive, got {n_constraints}")

    G = reference_operator(op.mesh)
    lower, upper = np.zeros(op.n_components), np.zeros(op.n_components)
    for q in range(op.n_components):
        try:
            lo, hi = generalized_extremes(op.component(q), G, dense_limit, tol)
        except ConvergenceError as e:
            raise ConvergenceError(f"Component {q + 1}: {e}") from e
        lower[q], upper[q] = max(lo, 0.0), hi
        logger.debug(f"SCM box q={q + 1}: [{lower[q]:.4e}, {upper[q]:.4e}]")

    interval = op.mesh.interval
    model = SCMModel(
        op.eim,
        lower,
        upper,
        np.zeros(0),
        np.zeros(0),
        np.zeros((0, op.n_components)),
        np.stack([element_y_entries(interval, alpha) for alpha in op.exponents]),
        element_y_entries(interval, 0.0),
    )

    s_values = np.unique([p.s if isinstance(p, Parameter) else float(p) for p in training])
    thetas = model.coefficients(s_values)
    chosen = [int(np.argmin(np.abs(s_values - 0.5 * (s_values[0] + s_values[-1]))))]
    while True:
        k = chosen[-1]
        beta, vector = smallest_eigenpair(op.combine(thetas[k]), G, dense_limit, tol)
        rayleigh = _component_rayleigh(op, G, vector)
        model = replace(
            model,
            constraint_s=np.append(model.constraint_s, s_values[k]),
            constraint_betas=np.append(model.constraint_betas, beta),
            constraint_rayleigh=np.vstack([model.constraint_rayleigh, rayleigh]),
        )
        logger.debug(f"SCM constraint {model.n_constraints}: s={s_values[k]:.5f} beta={beta:.5e}")
        if model.n_constraints >= min(n_constraints, len(s_values)):
            break

        lb = np.array([_lower_bound(theta, model) for theta in thetas])
        ub = (model.constraint_rayleigh @ thetas.T).min(axis=0)
        gap = (ub - lb) / np.maximum(np.abs(ub), np.finfo(float).tiny)
        gap[chosen] = -np.inf
        chosen.append(int(np.argmax(gap)))

    logger.info(f"SCM {op.subdomain.value if op.subdomain else ''}: {model.n_constraints} constraints")
    return model


# --- Error bound ---


@dataclass
class ErrorCertificate:
    """Certified bound delta_N = sqrt(Lambda) * ||r|| / beta_LB on the H^s trace error."""

    mu: Parameter
    residual_dual_norm: float
    beta_lb: float
    continuity_ub: float
    delta_N: float
    true_error: Optional[float] = None

    @property
    def effectivity(self) -> Optional[float]:
        if self.true_error is None or self.true_error == 0.0:
            return None
        return self.delta_N / self.true_error

    def as_row(self) -> List[float]:
        s, nu = self.mu.as_row()
        true_error = float("nan") if self.true_error is None else self.true_error
        effectivity = float("nan") if self.effectivity is None else self.effectivity
        return [s, nu, self.residual_dual_norm, self.beta_lb, self.continuity_ub, self.delta_N, true_error,
                effectivity]


CERTIFICATE_COLUMNS = ["s", "nu", "residual_dual_norm", "beta_lb", "continuity_ub", "delta_N", "true_error",
                       "effectivity"]


def error_bound(
    model: "ReducedModel",
    scm: SCMModel,
    mu: Parameter,
    beta_lb: Optional[float] = None,
    solution: Optional["OnlineSolution"] = None,
) -> ErrorCertificate:
    """
    Certified bound on ||tr(U^N - U_N)||_{H^s} at mu.

    Args:
        model: Reduced model with Riesz data.
        scm: SCM model of the same subdomain.
        mu: Parameter.
        beta_lb: Precomputed SCM lower bound at mu, if available.
        solution: Online solution at mu, if available.

    Returns:
        The certificate.

    Raises:
        IndefiniteOperatorError: If beta_LB(mu) <= 0, where no bound can be certified.
    """
    if beta_lb is None:
        beta_lb = scm_lower_bound(scm, mu)
    if not beta_lb > 0.0:
        raise IndefiniteOperatorError(
            f"SCM lower bound {beta_lb:.3e} at s={mu.s:.5f} is not positive; no error bound can be certified",
            beta_lb,
        )
    residual = residual_dual_norm(model, mu, solution)
    continuity = max(scm.continuity_bound(mu), 0.0)
    delta = math.sqrt(continuity) * residual / beta_lb
    return ErrorCertificate(mu, residual, beta_lb, continuity, delta)


# --- Proposition check on tiny meshes ---


def eta(eim: EIMModel, s: float) -> float:
    """eta(mu) with eta^2 = ||theta(s)||_2."""
    return math.sqrt(float(np.linalg.norm(eim.theta(s))))


@dataclass(frozen=True)
class BetaStarReport:
    """
    Dense inf-sup data at one parameter.

    Attributes:
        eta_sq: ||Theta(mu)||_2 (eta^2 / d_s).
        beta_h: Inf-sup constant of the EIM form in the exact-weight energy norm a(., .; mu).
        beta_h_upper: Largest eigenvalue of the same pencil (near-constancy bracket).
        beta_star: Inf-sup constant in the ||.||_* norm, minimized over candidate trial vectors.
        beta_star_lower: Rigorous lower bound lambda_min(A, sum_q A_q) / eta_sq.
    """

    eta_sq: float
    beta_h: float
    beta_h_upper: float
    beta_star: float
    beta_star_lower: float


def _star_norm(w: np.ndarray, components: Sequence[np.ndarray]) -> float:
    forms = np.array([w @ C @ w for C in components])
    return float(np.sum(forms**2) ** 0.25)


def _star_dual_norm(g: np.ndarray, components: Sequence[np.ndarray], S: np.ndarray, max_iter: int = 200) -> float:
    """sup_v g.v / ||v||_* by the stationarity fixed point v <- (sum_q a_q(v) A_q)^-1 g."""
    v = np.linalg.solve(S, g)
    best = 0.0
    for _ in range(max_iter):
        value = float(g @ v) / _star_norm(v, components)
        if value <= best * (1.0 + 1e-13):
            best = max(best, value)
            break
        best = value
        forms = np.array([v @ C @ v for C in components])
        v = np.linalg.solve(sum(f * C for f, C in zip(forms, components)), g)
    return best


def beta_star(op: AffineTruthOperator, mu: Parameter, max_dofs: int = 2000, n_candidates: int = 8) -> BetaStarReport:
    """
    Dense comparison of beta_* (norm ||w||_*^2 = (sum_q a_q(w, w)^2)^(1/2)) with beta_h.

    Raises:
        ValueError: If the truth space exceeds max_dofs or the operator has no EIM model.
    """
    if op.n_free > max_dofs:
        raise ValueError(f"beta_star is limited to {max_dofs} dofs, got {op.n_free}")
    if op.eim is None:
        raise ValueError("beta_star needs an operator with an EIM model")

    components = [_dense(op.component(q)) for q in range(op.n_components)]
    Theta = op.coefficients(mu)
    A = sum(t * C for t, C in zip(Theta, components))
    A = 0.5 * (A + A.T)
    X = _dense(exact_weight_operator(op.mesh, mu.s, scaled=True))
    S = sum(components)
    eta_sq = float(np.linalg.norm(Theta))

    pencil_h = sla.eigh(A, X, eigvals_only=True)
    values_s, vectors_s = sla.eigh(A, S)
    _, vectors_x = sla.eigh(A, X)

    k = min(n_candidates, op.n_free)
    candidates = list(vectors_s[:, :k].T) + list(vectors_x[:, :k].T)
    ratios = [
        _star_dual_norm(A @ w, components, S) / (eta_sq * _star_norm(w, components)) for w in candidates
    ]
    return BetaStarReport(
        eta_sq=eta_sq,
        beta_h=float(pencil_h[0]),
        beta_h_upper=float(pencil_h[-1]),
        beta_star=float(min(ratios)),
        beta_star_lower=float(values_s[0]) / eta_sq,
    )


def trace_inequality_check(
    w: Union[TruthSolution, np.ndarray], s: float, mesh: Optional[CylinderMesh] = None, J: int = 20
) -> Tuple[float, float]:
    """
    Both sides of ||tr w||_{H^s} <= d_s^(-1/2) ||w||_{X_h}.

    The left side uses the J x J modal projection, which can only underestimate the norm.
    """
    if isinstance(w, TruthSolution):
        mesh = w.mesh
        coeffs = w.coeffs
    else:
        if mesh is None:
            raise ValueError("trace_inequality_check needs the mesh for a plain coefficient vector")
        coeffs = np.asarray(w, dtype=float)
    trace = trace_bottom(coeffs, mesh)
    lhs = hs_norm(trace, s, mesh.tri, J) if np.any(trace) else 0.0
    rhs = xh_norm(coeffs, s, mesh) / math.sqrt(extension_constant(s))
    return lhs, rhs
