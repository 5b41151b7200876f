"""
Piecewise empirical interpolation of the extension weight.

On D1 the family y**(1-2s) is interpolated, on D2 the family y**(2-2s) =
y * y**(1-2s), which is bounded on [0, y_plus] for s > 1/2. The
interpolant is kept in two forms: the raw snapshots h_q = target(., s_q)
(pure powers, used for closed-form operator assembly) and the unit-pivot
residual basis xi_q (used for the triangular interpolation system).
With B[i, j] = xi_j(y_i) (unit lower triangular) and h_j = sum_i T[i, j] xi_i
(T upper triangular), the raw coefficients are theta(s) = T^-1 B^-1 g(s)
where g(s) are the target values at the magic points.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Optional, Sequence

import numpy as np
from loguru import logger
from scipy.linalg import solve_triangular

from ..core.errors import EIMExhaustedError
from .mesh import build_graded_partition
from .problems import Subdomain


# Refinement sweeps of theta(s); each gains roughly log10(1 / (cond(H) * eps)) digits.
REFINEMENT_STEPS = 4

# Veltkamp splitting constant 2**27 + 1 for float64.
_SPLITTER = 134217729.0


def _two_sum(a: np.ndarray, b: np.ndarray):
    s = a + b
    z = s - a
    return s, (a - (s - z)) + (b - z)


def _two_product(a: np.ndarray, b: np.ndarray):
    p = a * b
    ca, cb = _SPLITTER * a, _SPLITTER * b
    a_hi = ca - (ca - a)
    b_hi = cb - (cb - b)
    a_lo, b_lo = a - a_hi, b - b_hi
    return p, a_lo * b_lo - (((p - a_hi * b_hi) - a_lo * b_hi) - a_hi * b_lo)


def _residual(g: np.ndarray, H: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """g - theta @ H.T row by row, summed as in twice the working precision (Ogita-Rump-Oishi Dot2)."""
    products, errors = _two_product(H[None, :, :], theta[:, None, :])
    total, carry = g.copy(), np.zeros_like(g)
    for q in range(H.shape[1]):
        total, e = _two_sum(total, -products[:, :, q])
        carry += e - errors[:, :, q]
    return total + carry


@dataclass(frozen=True, eq=False)
class EIMModel:
    """
    Greedy EIM model on one subdomain.

    Attributes:
        subdomain: D1 or D2.
        s_snapshots: Selected parameters s_1..s_Q.
        magic_indices: Indices of the magic points in y_grid.
        magic_points: y_1..y_Q.
        interp_matrix: B, unit lower triangular, B[i, j] = xi_j(y_i).
        change_of_basis: T, upper triangular, raw snapshot j = sum_i T[i, j] xi_i.
        y_grid: Training grid in y.
        s_grid: Training grid in s.
        error_history: error_history[q-1] is the training sup error with q terms.
    """

    subdomain: Subdomain
    s_snapshots: np.ndarray
    magic_indices: np.ndarray
    magic_points: np.ndarray
    interp_matrix: np.ndarray
    change_of_basis: np.ndarray
    y_grid: np.ndarray
    s_grid: np.ndarray
    error_history: np.ndarray

    @property
    def Q(self) -> int:
        return len(self.s_snapshots)

    @property
    def exponents(self) -> np.ndarray:
        """Weight exponents 1 - 2 s_q of the operator components (after dividing by y on D2)."""
        return 1.0 - 2.0 * self.s_snapshots

    def _check_s(self, s: np.ndarray):
        inside = np.array([self.subdomain.contains(float(v)) for v in s])
        if not np.all(inside):
            raise ValueError(f"s = {s[~inside][0]} is outside subdomain {self.subdomain.value}")

    @cached_property
    def magic_snapshots(self) -> np.ndarray:
        """H[k, q] = h_q(y_k): raw snapshots at the magic points, so that theta(s) solves H theta = g(s)."""
        return self.subdomain.target(self.magic_points[None, :], self.s_snapshots[:, None]).T

    def _solve(self, rhs: np.ndarray) -> np.ndarray:
        beta = solve_triangular(self.interp_matrix, rhs.T, lower=True, unit_diagonal=True)
        return solve_triangular(self.change_of_basis, beta, lower=False).T

    def theta_many(self, s_values: Sequence[float]) -> np.ndarray:
        """
        Raw-snapshot coefficients for several values of s.

        The triangular solve T^-1 B^-1 g(s) is refined against H with residuals
        accumulated in doubled precision, which recovers theta to working accuracy
        although T carries the small EIM pivots. At a snapshot s_i the result is
        the i-th unit vector.

        Returns:
            (n, Q) array.
        """
        s = np.atleast_1d(np.asarray(s_values, dtype=float))
        self._check_s(s)
        g = self.subdomain.target(self.magic_points[None, :], s[:, None])
        H = self.magic_snapshots
        theta = self._solve(g)
        for _ in range(REFINEMENT_STEPS):
            correction = self._solve(_residual(g, H, theta))
            theta += correction
            if not np.any(correction):
                break
        return theta

    def theta(self, s: float) -> np.ndarray:
        """Coefficients theta_q(s), length Q."""
        return self.theta_many([s])[0]

    def snapshot_values(self, y: np.ndarray) -> np.ndarray:
        """Raw snapshots evaluated on y: (Q, len(y))."""
        return self.subdomain.target(np.asarray(y, dtype=float)[None, :], self.s_snapshots[:, None])

    def reconstruct(self, y: np.ndarray, s: Sequence[float]) -> np.ndarray:
        """Interpolant of the target family: (len(s), len(y))."""
        return self.theta_many(s) @ self.snapshot_values(y)

    def weight(self, y: np.ndarray, s: Sequence[float]) -> np.ndarray:
        """Interpolated extension weight h_EIM(y; s); on D2 the target is divided by y (y > 0 required)."""
        y = np.asarray(y, dtype=float)
        values = self.reconstruct(y, s)
        return values / y[None, :] if self.subdomain.y_shift else values

    def truncated(self, q: int) -> "EIMModel":
        """The leading q-term model (same snapshots, magic points and leading minors)."""
        if not 1 <= q <= self.Q:
            raise ValueError(f"Truncation must be between 1 and {self.Q}, got {q}")
        return EIMModel(
            self.subdomain,
            self.s_snapshots[:q].copy(),
            self.magic_indices[:q].copy(),
            self.magic_points[:q].copy(),
            self.interp_matrix[:q, :q].copy(),
            self.change_of_basis[:q, :q].copy(),
            self.y_grid,
            self.s_grid,
            self.error_history[:q].copy(),
        )


def eim_y_grid(subdomain: Subdomain, M_fe: int, gamma: float, y_plus: float, refinement: int = 16) -> np.ndarray:
    """
    Graded EIM grid refinement * M_fe subintervals fine; y = 0 is dropped on D2.

    On D2 the lower end y_- is therefore the first nonzero node.
    """
    nodes = np.array(build_graded_partition(refinement * M_fe, gamma, y_plus).nodes)
    return nodes[1:] if subdomain is Subdomain.D2 else nodes


def eim_build(
    subdomain: Subdomain,
    y_grid: Sequence[float],
    s_grid: Sequence[float],
    q_max: int = 25,
    tol: float = 1e-12,
) -> EIMModel:
    """
    Greedy EIM over the product of the training grids.

    Each step picks the s with the largest sup residual, the y where that
    residual peaks, and updates all residuals by the unit-pivot function.

    Args:
        subdomain: D1 or D2.
        y_grid: Increasing, non-negative y points (strictly positive on D2).
        s_grid: Training values of s inside the closure of the subdomain.
        q_max: Maximum number of terms.
        tol: Stop once the sup error drops below tol.

    Returns:
        The EIM model.

    Raises:
        ValueError: On invalid grids or parameters.
        EIMExhaustedError: If the residual degenerates before reaching tol or q_max.
    """
    y = np.asarray(y_grid, dtype=float).ravel()
    s = np.asarray(s_grid, dtype=float).ravel()
    if y.size == 0 or s.size == 0:
        raise ValueError("EIM grids must be non-empty")
    if np.any(~np.isfinite(y)) or np.any(np.diff(y) <= 0) or y[0] < 0:
        raise ValueError("y_grid must be finite, non-negative and strictly increasing")
    if subdomain is Subdomain.D2 and y[0] <= 0:
        raise ValueError("The D2 grid must exclude y = 0")
    if not all(subdomain.contains(float(v)) for v in s):
        raise ValueError(f"s_grid has values outside subdomain {subdomain.value}")
    if isinstance(q_max, bool) or not isinstance(q_max, (int, np.integer)) or q_max < 1:
        raise ValueError(f"q_max must be a positive integer, got {q_max!r}")
    if not tol >= 0:
        raise ValueError(f"tol must be non-negative, got {tol}")

    targets = subdomain.target(y[None, :], s[:, None])
    residual = targets.copy()
    scale = float(np.max(np.abs(targets)))

    B = np.zeros((q_max, q_max))
    T = np.zeros((q_max, q_max))
    xi = np.zeros((q_max, y.size))
    chosen, magic, errors = [], [], []

    for q in range(q_max):
        i = int(np.argmax(np.max(np.abs(residual), axis=1)))
        k = int(np.argmax(np.abs(residual[i])))
        pivot = float(residual[i, k])
        if not np.isfinite(pivot) or abs(pivot) <= 1e-15 * scale:
            raise EIMExhaustedError(
                f"EIM residual on {subdomain.value} degenerated at q = {q + 1} (pivot {pivot:.3e}) "
                f"before reaching tol = {tol:g}"
            )

        if q:
            B[q, :q] = xi[:q, k]
            T[:q, q] = solve_triangular(B[:q, :q], targets[i, magic], lower=True, unit_diagonal=True)
        B[q, q] = 1.0
        T[q, q] = pivot
        xi[q] = residual[i] / pivot

        residual -= np.outer(residual[:, k], xi[q])
        chosen.append(i)
        magic.append(k)
        err = float(np.max(np.abs(residual)))
        errors.append(err)
        logger.debug(f"EIM {subdomain.value} q={q + 1}: s={s[i]:.6f} y={y[k]:.3e} sup error={err:.3e}")
        if err < tol:
            break

    Q = len(chosen)
    logger.info(f"EIM {subdomain.value}: Q = {Q}, sup error {errors[-1]:.3e}")
    return EIMModel(
        subdomain=subdomain,
        s_snapshots=s[chosen].copy(),
        magic_indices=np.array(magic, dtype=np.int64),
        magic_points=y[magic].copy(),
        interp_matrix=B[:Q, :Q].copy(),
        change_of_basis=T[:Q, :Q].copy(),
        y_grid=y,
        s_grid=s,
        error_history=np.array(errors),
    )


def eim_sup_error(model: EIMModel, s_values: Sequence[float], y_values: Sequence[float], chunk: int = 256) -> float:
    """Max |target - interpolant| over the product of the given grids."""
    s = np.asarray(s_values, dtype=float).ravel()
    y = np.asarray(y_values, dtype=float).ravel()
    snapshots = model.snapshot_values(y)
    worst = 0.0
    for start in range(0, s.size, chunk):
        block = s[start : start + chunk]
        exact = model.subdomain.target(y[None, :], block[:, None])
        approx = model.theta_many(block) @ snapshots
        worst = max(worst, float(np.max(np.abs(exact - approx))))
    return worst


@dataclass(frozen=True)
class PositivityReport:
    min_weight: float
    s_at_min: float
    y_at_min: float

    @property
    def positive(self) -> bool:
        return bool(self.min_weight > 0.0)


def eim_positivity(
    model: EIMModel, s_values: Optional[Sequence[float]] = None, y_values: Optional[Sequence[float]] = None
) -> PositivityReport:
    """
    Minimum of the interpolated weight h_EIM(y; s) over the training grids (or the given ones).

    A negative minimum means loss of numerical ellipticity of the EIM-based form.
    """
    s = np.asarray(model.s_grid if s_values is None else s_values, dtype=float).ravel()
    y = np.asarray(model.y_grid if y_values is None else y_values, dtype=float).ravel()
    # the D1 weight vanishes at y = 0 for s < 1/2
    y = y[y > 0]
    weights = model.weight(y, s)
    i, k = np.unravel_index(int(np.argmin(weights)), weights.shape)
    report = PositivityReport(float(weights[i, k]), float(s[i]), float(y[k]))
    if not report.positive:
        logger.warning(
            f"EIM weight on {model.subdomain.value} is non-positive ({report.min_weight:.3e} at "
            f"s={report.s_at_min:.4f}, y={report.y_at_min:.3e}): loss of numerical ellipticity"
        )
    return report


def eim_envelope(model: EIMModel, n_snapshots: int = 4) -> Dict[str, np.ndarray]:
    """
    Per-y summary of the target family over the training s-grid.

    Returns:
        Columns "y", "median", "min", "max" and "snapshot_1".."snapshot_k" for the first k selected parameters.
    """
    y = model.y_grid
    values = model.subdomain.target(y[None, :], model.s_grid[:, None])
    table = {
        "y": y,
        "median": np.median(values, axis=0),
        "min": np.min(values, axis=0),
        "max": np.max(values, axis=0),
    }
    for q in range(min(n_snapshots, model.Q)):
        table[f"snapshot_{q + 1}"] = model.subdomain.target(y, model.s_snapshots[q])
    return table
