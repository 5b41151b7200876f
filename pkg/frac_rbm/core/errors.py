"""Exception hierarchy shared by the numerical modules, persistence and the command driver."""

from typing import Optional


class FracRBMError(Exception):
    """Base class for all errors raised by the package."""

    exit_code = 1


class ConfigError(FracRBMError, ValueError):
    """Invalid run configuration (bad key, out-of-range value, unreadable config file)."""

    exit_code = 2


class NumericalError(FracRBMError):
    """A numerical procedure failed to deliver a trustworthy result."""

    exit_code = 3


class ConvergenceError(NumericalError):
    """An iterative method hit its iteration cap or an eigen-solver did not converge."""

    def __init__(self, message: str, iterations: Optional[int] = None, residual: Optional[float] = None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class IndefiniteOperatorError(NumericalError):
    """A system expected to be symmetric positive definite is not.

    Attributes:
        value: The offending curvature (CG), smallest eigenvalue or coercivity lower bound.
    """

    def __init__(self, message: str, value: Optional[float] = None):
        super().__init__(message)
        self.value = value


class EIMExhaustedError(NumericalError):
    """The EIM greedy residual degenerated before the requested number of terms."""


class LinearDependenceError(NumericalError):
    """A new snapshot is numerically contained in the current reduced space."""

    def __init__(self, message: str, remainder: Optional[float] = None):
        super().__init__(message)
        self.remainder = remainder


class InfeasibleProgramError(NumericalError):
    """The SCM linear program has no feasible point."""


class ModelIOError(FracRBMError, IOError):
    """Reading or writing a model container failed."""

    exit_code = 4


class ModelFormatError(ModelIOError):
    """A model container is malformed (magic, version, truncated section or checksum)."""
