"""
Reduced-basis offline greedy and online evaluation.

The reduced space is spanned by truth snapshots U(mu_1), ..., U(mu_N). Internally the
snapshots are orthonormalized in G_ref (basis xi, raw = xi R with R upper
triangular); the online system is solved in the orthonormal coordinates and
converted to the Lagrange (raw-snapshot) coefficients c(mu) = R^-1 c_orth(mu),
which drive both the trace assembly and the residual-free greedy objective ||c||_1.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as sla
from loguru import logger

from ..core.errors import IndefiniteOperatorError, LinearDependenceError
from .certify import RieszBuilder, SCMModel, error_bound
from .eim import EIMModel
from .fem_truth import KroneckerOperator, TruthProblem, trace_bottom
from .problems import Parameter, Subdomain, extension_constant, load_coefficients, remove_overlap

GREEDY_MODES = ("residual_free", "residual_based")
FIRST_SNAPSHOT = ("midpoint", "random")

# Gram-Schmidt remainder (relative to the snapshot norm) below which a snapshot is dependent.
DEPENDENCE_TOL = 1e-12
MAX_PASSES = 4

Mapper = Callable[[Callable, Iterable], Iterable]


@dataclass(frozen=True)
class GreedyStep:
    """One greedy iteration: the snapshot added, the objective maximum after adding it and the argmax."""

    n: int
    mu: Parameter
    objective: float
    change: float
    next_mu: Optional[Parameter] = None


@dataclass(frozen=True)
class OnlineSolution:
    """Reduced solution at mu: Lagrange coefficients c and orthonormal-basis coefficients c_orth."""

    mu: Parameter
    c: np.ndarray
    c_orth: np.ndarray

    @property
    def l1(self) -> float:
        return float(np.abs(self.c).sum())


@dataclass(frozen=True, eq=False)
class ReducedModel:
    """
    Immutable reduced model of one subdomain.

    Attributes:
        eim: EIM model giving theta(s).
        mu_snapshots: Selected parameters in greedy order.
        basis: (n_free, N) snapshots orthonormalized in G_ref.
        change_of_basis: (N, N) upper-triangular R with raw snapshots = basis @ R.
        reduced_ops: (Q, N, N) projections xi_m . A_q xi_n.
        reduced_loads: (P, N) projections F_p . xi_n.
        load_rule: Name of the rule giving rho_p(nu).
        trace_snapshots: (n_vertices, N) bottom traces of the raw snapshots.
        trace_gram: (N, N) L2(Omega) Gram matrix of the trace snapshots.
        riesz_factor: Residual factor, columns ordered loads first then (n, q) n-major.
        history: Greedy iterations.
    """

    eim: EIMModel
    mu_snapshots: Tuple[Parameter, ...]
    basis: np.ndarray
    change_of_basis: np.ndarray
    reduced_ops: np.ndarray
    reduced_loads: np.ndarray
    load_rule: str
    trace_snapshots: np.ndarray
    trace_gram: np.ndarray
    riesz_factor: Optional[np.ndarray] = None
    history: Tuple[GreedyStep, ...] = field(default_factory=tuple)

    @property
    def subdomain(self) -> Subdomain:
        return self.eim.subdomain

    @property
    def N(self) -> int:
        return self.reduced_ops.shape[1]

    @property
    def Q(self) -> int:
        return self.reduced_ops.shape[0]

    @property
    def P(self) -> int:
        return self.reduced_loads.shape[0]

    def coefficients(self, mu: Parameter) -> np.ndarray:
        return self.eim.theta(mu.s) / extension_constant(mu.s)

    def load_coefficients(self, mu: Parameter) -> np.ndarray:
        return load_coefficients(self.load_rule, mu.nu)

    def solve(self, mu: Parameter) -> OnlineSolution:
        """
        Assemble and solve the N x N Galerkin system at mu.

        Raises:
            ValueError: If mu lies outside the model's subdomain.
            IndefiniteOperatorError: If the reduced matrix is not positive definite.
        """
        if not self.subdomain.contains(mu.s):
            raise ValueError(f"s = {mu.s} is outside subdomain {self.subdomain.value}")
        if self.N == 0:
            empty = np.zeros(0)
            return OnlineSolution(mu, empty, empty)

        A = np.tensordot(self.coefficients(mu), self.reduced_ops, axes=1)
        F = self.load_coefficients(mu) @ self.reduced_loads
        try:
            c_orth = sla.cho_solve(sla.cho_factor(A), F)
        except np.linalg.LinAlgError as e:
            smallest = float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])
            raise IndefiniteOperatorError(
                f"Reduced system at s={mu.s} is not positive definite (smallest eigenvalue {smallest:.3e})", smallest
            ) from e
        c = sla.solve_triangular(self.change_of_basis, c_orth)
        return OnlineSolution(mu, c, c_orth)

    def truncated(self, n: int) -> "ReducedModel":
        """The nested model spanned by the first n snapshots."""
        if not 1 <= n <= self.N:
            raise ValueError(f"Truncation size must be in [1, {self.N}], got {n}")
        factor = None
        if self.riesz_factor is not None:
            columns = self.P + n * self.Q
            factor = self.riesz_factor[:, :columns]
            used = np.flatnonzero(np.any(factor != 0.0, axis=1))
            factor = factor[: used[-1] + 1 if used.size else 0]
        return ReducedModel(
            eim=self.eim,
            mu_snapshots=self.mu_snapshots[:n],
            basis=self.basis[:, :n],
            change_of_basis=self.change_of_basis[:n, :n],
            reduced_ops=self.reduced_ops[:, :n, :n],
            reduced_loads=self.reduced_loads[:, :n],
            load_rule=self.load_rule,
            trace_snapshots=self.trace_snapshots[:, :n],
            trace_gram=self.trace_gram[:n, :n],
            riesz_factor=factor,
            history=self.history[:n],
        )


def online_solve(model: ReducedModel, mu: Parameter) -> OnlineSolution:
    return model.solve(mu)


def online_trace(model: ReducedModel, mu: Union[Parameter, OnlineSolution, np.ndarray]) -> np.ndarray:
    """Trace u_N on all 2D vertices from the stored trace snapshots and the Lagrange coefficients."""
    if isinstance(mu, Parameter):
        c = model.solve(mu).c
    elif isinstance(mu, OnlineSolution):
        c = mu.c
    else:
        c = np.asarray(mu, dtype=float)
    if c.shape != (model.N,):
        raise ValueError(f"Expected {model.N} coefficients, got shape {c.shape}")
    return model.trace_snapshots @ c


# --- Offline ---


class _SnapshotSpace:
    """Growing G_ref-orthonormal basis with the projected operators and loads."""

    def __init__(self, truth: TruthProblem, n_max: int):
        self.truth = truth
        self.components: List[KroneckerOperator] = [
            truth.operator.component(q) for q in range(truth.operator.n_components)
        ]
        n_free = truth.n_free
        Q, P = len(self.components), truth.loads.n_components
        self.basis = np.zeros((n_free, n_max))
        self.g_basis = np.zeros((n_free, n_max))
        self.R = np.zeros((n_max, n_max))
        self.ops = np.zeros((Q, n_max, n_max))
        self.loads = np.zeros((P, n_max))
        self.traces = np.zeros((truth.mesh.tri.n_vertices, n_max))
        self.N = 0

    def orthonormalize(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Gram-Schmidt against the current basis, repeated until the remainder stops shrinking by half."""
        G = self.truth.reference
        z, gz = u.copy(), G.matvec(u)
        norm0 = math.sqrt(max(float(z @ gz), 0.0))
        coords = np.zeros(self.N)
        remainder = norm0
        for _ in range(MAX_PASSES):
            if self.N == 0 or remainder == 0.0:
                break
            c = self.g_basis[:, : self.N].T @ z
            z -= self.basis[:, : self.N] @ c
            coords += c
            gz = G.matvec(z)
            previous, remainder = remainder, math.sqrt(max(float(z @ gz), 0.0))
            if remainder >= 0.5 * previous:
                break
        if norm0 == 0.0 or remainder < DEPENDENCE_TOL * norm0:
            raise LinearDependenceError(
                f"Snapshot remainder {remainder:.3e} below {DEPENDENCE_TOL:g} x norm {norm0:.3e}", remainder
            )
        return z / remainder, gz / remainder, np.append(coords, remainder)

    def extend(self, u: np.ndarray) -> np.ndarray:
        """Add a raw snapshot; returns the columns A_q xi_new for the Riesz builder."""
        xi, g_xi, coords = self.orthonormalize(u)
        n = self.N
        self.basis[:, n] = xi
        self.g_basis[:, n] = g_xi
        self.R[: n + 1, n] = coords
        applied = np.column_stack([A.matvec(xi) for A in self.components])
        projections = self.basis[:, : n + 1].T @ applied
        for q in range(len(self.components)):
            self.ops[q, : n + 1, n] = projections[:, q]
            self.ops[q, n, : n + 1] = projections[:, q]
        self.loads[:, n] = self.truth.loads.vectors @ xi
        self.traces[:, n] = trace_bottom(u, self.truth.mesh)
        self.N += 1
        return applied

    def model(self, eim: EIMModel, snapshots: Sequence[Parameter], riesz: RieszBuilder,
              history: Sequence[GreedyStep]) -> ReducedModel:
        n = self.N
        mass, _ = self.truth.mesh.tri.p1_matrices
        traces = self.traces[:, :n].copy()
        return ReducedModel(
            eim=eim,
            mu_snapshots=tuple(snapshots),
            basis=self.basis[:, :n].copy(),
            change_of_basis=self.R[:n, :n].copy(),
            reduced_ops=self.ops[:, :n, :n].copy(),
            reduced_loads=self.loads[:, :n].copy(),
            load_rule=self.truth.loads.coefficient_rule,
            trace_snapshots=traces,
            trace_gram=traces.T @ (mass @ traces),
            riesz_factor=riesz.factor(),
            history=tuple(history),
        )


def _first_index(training: Sequence[Parameter], first: str, seed: int) -> int:
    if first == "random":
        return int(np.random.default_rng(seed).integers(len(training)))
    points = np.array([p.as_row() for p in training])
    points[np.isnan(points)] = 0.0
    center = 0.5 * (points.min(axis=0) + points.max(axis=0))
    return int(np.argmin(np.linalg.norm(points - center, axis=1)))


def _relative_change(model: ReducedModel, current: OnlineSolution, previous: Optional[OnlineSolution]) -> float:
    """Relative L2(Omega) change of u_N between the models of size N - 1 and N."""
    if previous is None:
        return math.inf
    d = current.c.copy()
    d[: previous.c.size] -= previous.c
    num = float(d @ model.trace_gram @ d)
    den = float(current.c @ model.trace_gram @ current.c)
    if den <= 0.0:
        return 0.0 if num <= 0.0 else math.inf
    return math.sqrt(max(num, 0.0) / den)


def greedy_offline(
    truth: TruthProblem,
    training: Sequence[Parameter],
    n_max: int = 15,
    tol: float = 1e-12,
    mode: str = "residual_free",
    scm: Optional[SCMModel] = None,
    first: str = "midpoint",
    seed: int = 0,
    mapper: Mapper = map,
) -> ReducedModel:
    """
    Greedy snapshot selection over a finite training set.

    Each iteration solves the truth problem at the current parameter, extends the
    G_ref-orthonormal basis, updates the projections and the Riesz factor, and
    selects the next parameter maximizing the objective over the remaining
    training points: ||c(mu)||_1 (residual_free) or the certified bound
    Delta_N(mu) (residual_based). The iteration stops at n_max, when the
    training set is exhausted, or when the stopping quantity drops below tol.
    For residual_free the stopping quantity is the largest relative L2(Omega)
    change of u_N over the training set between consecutive sizes; for
    residual_based it is the maximal bound.

    Args:
        truth: Truth problem on the model's subdomain (its operator carries the EIM model).
        training: Training parameters.
        n_max: Largest reduced dimension.
        tol: Stopping tolerance.
        mode: "residual_free" or "residual_based".
        scm: SCM model, required for residual_based.
        first: "midpoint" (training point closest to the centre) or "random".
        seed: Seed for first="random".
        mapper: map-like callable used for the training scan.

    Raises:
        ValueError: For inconsistent arguments.
        ConvergenceError / IndefiniteOperatorError: If a truth solve fails.
    """
    if mode not in GREEDY_MODES:
        raise ValueError(f"Unknown greedy mode '{mode}', expected one of {GREEDY_MODES}")
    if first not in FIRST_SNAPSHOT:
        raise ValueError(f"Unknown first snapshot rule '{first}', expected one of {FIRST_SNAPSHOT}")
    if mode == "residual_based" and scm is None:
        raise ValueError("The residual_based greedy needs an SCM model")
    if n_max < 1:
        raise ValueError(f"n_max must be positive, got {n_max}")
    training = list(training)
    if not training:
        raise ValueError("The training set is empty")
    eim = truth.operator.eim
    if eim is None or truth.subdomain is None:
        raise ValueError("The truth problem needs an EIM-based operator on a subdomain")
    outside = [p.s for p in training if not truth.subdomain.contains(p.s)]
    if outside:
        raise ValueError(f"{len(outside)} training points lie outside {truth.subdomain.value}, e.g. s={outside[0]}")

    space = _SnapshotSpace(truth, n_max)
    riesz = RieszBuilder(truth)
    riesz.add(truth.loads.vectors.T)

    available = np.ones(len(training), dtype=bool)
    snapshots: List[Parameter] = []
    history: List[GreedyStep] = []
    previous: Optional[List[OnlineSolution]] = None
    previous_indices: List[int] = []
    index: Optional[int] = _first_index(training, first, seed)
    model: Optional[ReducedModel] = None
    objective = np.zeros(len(training))

    while index is not None and space.N < n_max:
        mu = training[index]
        available[index] = False
        solution = truth.solve(mu)
        try:
            applied = space.extend(solution.coeffs)
        except LinearDependenceError as e:
            logger.warning(f"Skipping snapshot s={mu.s:.6f}: {e}")
            objective[index] = -np.inf
            index = int(np.argmax(np.where(available, objective, -np.inf))) if available.any() else None
            continue
        riesz.add(applied)
        snapshots.append(mu)

        model = space.model(eim, snapshots, riesz, history)
        remaining = np.flatnonzero(available)
        if space.N == n_max or remaining.size == 0:
            history.append(GreedyStep(space.N, mu, math.nan, math.nan))
            break

        candidates = [training[i] for i in remaining]
        solutions = list(mapper(model.solve, candidates))
        if mode == "residual_free":
            values = np.array([sol.l1 for sol in solutions])
            prev_by_index = dict(zip(previous_indices, previous or []))
            changes = [
                _relative_change(model, sol, prev_by_index.get(int(i))) for i, sol in zip(remaining, solutions)
            ]
            stop_value = max(changes)
        else:
            values = np.array(
                [error_bound(model, scm, p, solution=sol).delta_N for p, sol in zip(candidates, solutions)]
            )
            stop_value = float(values.max())

        objective[:] = -np.inf
        objective[remaining] = values
        index = int(np.argmax(objective))
        history.append(GreedyStep(space.N, mu, float(values.max()), float(stop_value), training[index]))
        logger.debug(
            f"Greedy N={space.N}: s={mu.s:.6f} max objective {values.max():.4e} stop quantity {stop_value:.3e}"
        )
        if stop_value < tol:
            logger.info(f"Greedy stopped at N={space.N}: {stop_value:.3e} < tol {tol:g}")
            break
        previous, previous_indices = solutions, [int(i) for i in remaining]

    if model is None:
        raise LinearDependenceError("No independent snapshot could be added", 0.0)
    model = space.model(eim, snapshots, riesz, history)
    logger.info(f"Reduced model {model.subdomain.value}: N={model.N}, Riesz rank {model.riesz_factor.shape[0]}")
    return model


# --- Error ensembles ---


@dataclass(frozen=True, eq=False)
class ErrorEnsembles:
    """
    Per-point L2(Omega) trace errors over a test set.

    Attributes:
        n_values: Reduced dimensions evaluated.
        test_set: Test parameters.
        eim_errors: (len(n_values), P) errors against the EIM-based truth (E_N).
        exact_errors: (len(n_values), P) errors against the exact-weight truth (F_N).
        truth_gap: (P,) L2 distance between the two truths.
    """

    n_values: Tuple[int, ...]
    test_set: Tuple[Parameter, ...]
    eim_errors: np.ndarray
    exact_errors: np.ndarray
    truth_gap: np.ndarray

    def summary(self) -> List[Tuple[int, float, float, float, float, float, float]]:
        """Rows (N, median E, max E, min E, median F, max F, min F)."""
        rows = []
        for k, n in enumerate(self.n_values):
            e, f = self.eim_errors[k], self.exact_errors[k]
            rows.append((n, float(np.median(e)), float(e.max()), float(e.min()),
                         float(np.median(f)), float(f.max()), float(f.min())))
        return rows


def _l2(field: np.ndarray, mass) -> float:
    return math.sqrt(max(float(field @ (mass @ field)), 0.0))


def error_ensembles(
    model: ReducedModel,
    truth: TruthProblem,
    test_set: Sequence[Parameter],
    n_values: Optional[Sequence[int]] = None,
    training_set: Optional[Sequence[Parameter]] = None,
    mapper: Mapper = map,
) -> ErrorEnsembles:
    """
    E_N and F_N over a test set for the nested models of sizes n_values.

    Both truths are solved once per test point; every truncated model reuses them.

    Raises:
        ValueError: If the test set overlaps the training set or n_values is out of range.
    """
    test_set = list(test_set)
    if training_set is not None and len(remove_overlap(test_set, training_set)) != len(test_set):
        raise ValueError("The test set overlaps the training set")
    n_values = tuple(range(1, model.N + 1)) if n_values is None else tuple(int(n) for n in n_values)
    if any(not 1 <= n <= model.N for n in n_values):
        raise ValueError(f"n_values must lie in [1, {model.N}], got {n_values}")

    mesh = truth.mesh
    mass, _ = mesh.tri.p1_matrices

    def truth_traces(mu: Parameter) -> Tuple[np.ndarray, np.ndarray]:
        return trace_bottom(truth.solve(mu)), trace_bottom(truth.solve_exact(mu))

    traces = list(mapper(truth_traces, test_set))
    gap = np.array([_l2(u - v, mass) for u, v in traces])

    eim_errors = np.zeros((len(n_values), len(test_set)))
    exact_errors = np.zeros_like(eim_errors)
    for k, n in enumerate(n_values):
        sub = model.truncated(n)
        for i, mu in enumerate(test_set):
            u_n = online_trace(sub, mu)
            eim_errors[k, i] = _l2(u_n - traces[i][0], mass)
            exact_errors[k, i] = _l2(u_n - traces[i][1], mass)
        logger.debug(f"N={n}: median E {np.median(eim_errors[k]):.3e}, median F {np.median(exact_errors[k]):.3e}")

    return ErrorEnsembles(n_values, tuple(test_set), eim_errors, exact_errors, gap)
