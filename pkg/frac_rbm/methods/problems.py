"""
Parameters, subdomains, right-hand sides and parameter sets.

The parameter is mu = (s, nu): s in (0, 1) is the fractional order and nu an
optional right-hand-side parameter. The s-range is split at 1/2 into two
subdomains that get separate EIM, truth and reduced models.
"""

import enum
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gamma as gamma_fn


class Subdomain(str, enum.Enum):
    """The two halves of the s-range: D1 = (0, 1/2] and D2 = (1/2, 1)."""

    D1 = "D1"
    D2 = "D2"

    @property
    def y_shift(self) -> int:
        """Power of y multiplying the weight in the EIM target (0 on D1, 1 on D2)."""
        return 0 if self is Subdomain.D1 else 1

    def contains(self, s: float) -> bool:
        """Membership test; s = 1/2 belongs to D1, and D2 accepts it as the closure point of its training grid."""
        if self is Subdomain.D1:
            return 0.0 < s <= 0.5
        return 0.5 <= s < 1.0

    def target(self, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        """
        EIM target family: y^(1-2s) on D1 and y^(2-2s) on D2.

        Broadcasts y against s. At y = 0 numpy gives 0**0 = 1, which is the
        pointwise limit of y^(1-2s) at s = 1/2.
        """
        return np.power(y, self.y_shift + 1.0 - 2.0 * np.asarray(s, dtype=float))

    @classmethod
    def for_s(cls, s: float) -> "Subdomain":
        """Route a value of s to its subdomain."""
        if not 0.0 < s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {s}")
        return cls.D1 if s <= 0.5 else cls.D2


def fractional_exponent(s: float) -> float:
    """a(s) = 1 - 2s, the exponent of the extension weight y^a."""
    return 1.0 - 2.0 * s


def extension_constant(s: float) -> float:
    """d_s = 2^a Gamma(1-s) / Gamma(s)."""
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    return float(2.0 ** fractional_exponent(s) * gamma_fn(1.0 - s) / gamma_fn(s))


@dataclass(frozen=True)
class Parameter:
    """A point mu = (s, nu) of the parameter domain; nu is None for the one-parameter problem."""

    s: float
    nu: Optional[float] = None

    def __post_init__(self):
        if not (isinstance(self.s, (int, float)) and math.isfinite(self.s) and 0.0 < self.s < 1.0):
            raise ValueError(f"s must lie in (0, 1), got {self.s!r}")
        if self.nu is not None and not math.isfinite(self.nu):
            raise ValueError(f"nu must be finite, got {self.nu!r}")

    @property
    def a(self) -> float:
        return fractional_exponent(self.s)

    @property
    def d_s(self) -> float:
        return extension_constant(self.s)

    @property
    def subdomain(self) -> Subdomain:
        return Subdomain.for_s(self.s)

    def as_row(self) -> Tuple[float, float]:
        """(s, nu) with nu = NaN when absent; the layout used by persistence and CSV output."""
        return (float(self.s), float("nan") if self.nu is None else float(self.nu))

    @classmethod
    def from_row(cls, row: Sequence[float]) -> "Parameter":
        s, nu = float(row[0]), float(row[1])
        return cls(s, None if math.isnan(nu) else nu)


def params_to_array(params: Sequence[Parameter]) -> np.ndarray:
    """Stack parameters as an (n, 2) array with NaN for missing nu."""
    return np.array([p.as_row() for p in params], dtype=float).reshape(-1, 2)


def params_from_array(rows: np.ndarray) -> List[Parameter]:
    return [Parameter.from_row(row) for row in np.asarray(rows, dtype=float).reshape(-1, 2)]


# --- Parameter sets ---


def subdomain_range(subdomain: Subdomain, s_min: float, s_max: float) -> Tuple[float, float]:
    """Closed training range of s on a subdomain."""
    return (s_min, 0.5) if subdomain is Subdomain.D1 else (0.5, s_max)


def training_set(
    subdomain: Subdomain,
    s_points: int,
    s_min: float = 0.03,
    s_max: float = 0.97,
    nu_points: Optional[int] = None,
) -> List[Parameter]:
    """
    Equispaced training grid on a subdomain, optionally tensorized with nu in [0, 1].

    On D2 the point s = 1/2 is dropped so that the grid lies inside (1/2, 1).

    Args:
        subdomain: Target subdomain.
        s_points: Points on the closed s-range.
        s_min: Lower end of the experiment range.
        s_max: Upper end of the experiment range.
        nu_points: Points on [0, 1] for the two-parameter problem, or None.

    Returns:
        List of parameters, s-major.
    """
    lo, hi = subdomain_range(subdomain, s_min, s_max)
    s_values = np.linspace(lo, hi, s_points)
    if subdomain is Subdomain.D2:
        s_values = s_values[s_values > 0.5]
    if nu_points is None:
        return [Parameter(float(s)) for s in s_values]
    nu_values = np.linspace(0.0, 1.0, nu_points)
    return [Parameter(float(s), float(nu)) for s in s_values for nu in nu_values]


def equispaced_interior(lo: float, hi: float, count: int) -> np.ndarray:
    """count equispaced points of [lo, hi] with the endpoints removed."""
    return np.linspace(lo, hi, count + 2)[1:-1]


def test_set(
    subdomain: Subdomain,
    s_points: int,
    s_min: float = 0.03,
    s_max: float = 0.97,
    nu_points: Optional[int] = None,
) -> List[Parameter]:
    """
    Interior equispaced test grid on a subdomain.

    Args:
        subdomain: Target subdomain.
        s_points: Number of interior s-points.
        s_min: Lower end of the experiment range.
        s_max: Upper end of the experiment range.
        nu_points: Interior nu-points for the two-parameter problem, or None.

    Returns:
        List of parameters, s-major.
    """
    lo, hi = subdomain_range(subdomain, s_min, s_max)
    s_values = equispaced_interior(lo, hi, s_points)
    if nu_points is None:
        return [Parameter(float(s)) for s in s_values]
    nu_values = np.linspace(0.0, 1.0, nu_points)
    return [Parameter(float(s), float(nu)) for s in s_values for nu in nu_values]


def remove_overlap(
    candidates: Sequence[Parameter], reference: Sequence[Parameter], atol: float = 1e-12
) -> List[Parameter]:
    """Drop candidates that coincide with a reference parameter."""
    if not reference:
        return list(candidates)
    ref = params_to_array(reference)
    ref = np.nan_to_num(ref, nan=-1.0)
    kept = []
    for p in candidates:
        row = np.nan_to_num(np.array(p.as_row()), nan=-1.0)
        if not np.any(np.all(np.abs(ref - row) <= atol, axis=1)):
            kept.append(p)
    return kept


# --- Right-hand sides ---

LOAD_COEFFICIENT_RULES: Dict[str, Callable[[Optional[float]], np.ndarray]] = {}


def _constant_rule(nu: Optional[float]) -> np.ndarray:
    return np.ones(1)


def _nu_blend_rule(nu: Optional[float]) -> np.ndarray:
    if nu is None:
        raise ValueError("This right-hand side needs a value of nu")
    return np.array([nu * nu, 1.0 - nu * nu])


LOAD_COEFFICIENT_RULES["constant"] = _constant_rule
LOAD_COEFFICIENT_RULES["nu_blend"] = _nu_blend_rule


def load_coefficients(rule: str, nu: Optional[float]) -> np.ndarray:
    """Coefficients rho_p(nu) of the affine load components."""
    try:
        return LOAD_COEFFICIENT_RULES[rule](nu)
    except KeyError as e:
        raise ValueError(f"Unknown load coefficient rule '{rule}'") from e


class RightHandSide:
    """
    Affine right-hand side f(x; nu) = sum_p rho_p(nu) f_p(x).

    Attributes:
        name: Label used in metadata.
        components: Pointwise callables f_p(x1, x2) acting on arrays.
        coefficient_rule: Key of LOAD_COEFFICIENT_RULES.
    """

    def __init__(self, name: str, components: Sequence[Callable[[np.ndarray, np.ndarray], np.ndarray]],
                 coefficient_rule: str = "constant"):
        if coefficient_rule not in LOAD_COEFFICIENT_RULES:
            raise ValueError(f"Unknown load coefficient rule '{coefficient_rule}'")
        self.name = name
        self.components = list(components)
        self.coefficient_rule = coefficient_rule

    @property
    def n_components(self) -> int:
        return len(self.components)

    def coefficients(self, nu: Optional[float]) -> np.ndarray:
        return load_coefficients(self.coefficient_rule, nu)

    def modal(self):
        """Sine coefficients when the right-hand side is modal, otherwise None."""
        return None


class ModalRHS(RightHandSide):
    """
    Right-hand side given by sine coefficients of the modes 2 sin(j pi x1) sin(k pi x2).

    Args:
        coefficients: Mapping (j, k) -> coefficient, with j, k >= 1.
        name: Label used in metadata.
    """

    def __init__(self, coefficients: Dict[Tuple[int, int], float], name: str = "modal"):
        if not coefficients:
            raise ValueError("ModalRHS needs at least one mode")
        for (j, k) in coefficients:
            if j < 1 or k < 1:
                raise ValueError(f"Mode indices start at 1, got ({j}, {k})")
        self.mode_coefficients = {(int(j), int(k)): float(c) for (j, k), c in coefficients.items()}
        super().__init__(name, [self._evaluate], "constant")

    def _evaluate(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        value = np.zeros(np.broadcast(x1, x2).shape)
        for (j, k), c in self.mode_coefficients.items():
            value = value + 2.0 * c * np.sin(j * np.pi * x1) * np.sin(k * np.pi * x2)
        return value

    def modal(self):
        from .oracle import ModalField

        size = max(max(j, k) for j, k in self.mode_coefficients)
        coeffs = np.zeros((size, size))
        for (j, k), c in self.mode_coefficients.items():
            coeffs[j - 1, k - 1] = c
        return ModalField(coeffs)


def example1_rhs() -> ModalRHS:
    """f = sin(2 pi x1) sin(2 pi x2), i.e. half of the (2, 2) mode."""
    return ModalRHS({(2, 2): 0.5}, name="example1")


def example2_rhs() -> RightHandSide:
    """f(x; nu) = nu^2 sin(2 pi x1) sin(2 pi x2) + (1 - nu^2) sin(3 pi x1) sin(3 pi x2) exp(x1 x2)."""

    def f1(x1, x2):
        return np.sin(2.0 * np.pi * x1) * np.sin(2.0 * np.pi * x2)

    def f2(x1, x2):
        return np.sin(3.0 * np.pi * x1) * np.sin(3.0 * np.pi * x2) * np.exp(x1 * x2)

    return RightHandSide("example2", [f1, f2], "nu_blend")


def rhs_from_config(name: str, modal_coefficients: Optional[Sequence[Sequence[float]]] = None) -> RightHandSide:
    """Build the right-hand side selected by configuration."""
    if name == "example1":
        return example1_rhs()
    if name == "example2":
        return example2_rhs()
    if name == "modal":
        coeffs = {(int(j), int(k)): float(c) for j, k, c in (modal_coefficients or [])}
        return ModalRHS(coeffs)
    raise ValueError(f"Unknown right-hand side '{name}'")


def tensor_test_set(subdomain: Subdomain, points: int, s_min: float = 0.03, s_max: float = 0.97) -> List[Parameter]:
    """
    The part on a subdomain of a points x points tensor grid over [s_min, s_max] x [0, 1].

    Used for the two-parameter problem, whose test ensemble is laid over the
    whole parameter domain and then split by subdomain.
    """
    s_values = np.linspace(s_min, s_max, points)
    nu_values = np.linspace(0.0, 1.0, points)
    return [
        Parameter(float(s), float(nu))
        for s in s_values
        if (0.0 < s <= 0.5 if subdomain is Subdomain.D1 else 0.5 < s < 1.0)
        for nu in nu_values
    ]
