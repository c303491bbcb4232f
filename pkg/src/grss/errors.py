"""Exception types shared across the package."""


class GrssError(Exception):
    """Base class for all package errors."""


class DomainError(GrssError, ValueError):
    """An argument lies outside the domain of the requested function."""


class DatasetError(GrssError, ValueError):
    """A ranked-set dataset violates its structural invariants."""


class EvaluationError(GrssError, ArithmeticError):
    """A quantity was requested at a point where it is not finite."""


class QuadratureError(GrssError, RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message: str, achieved: float = float("nan")):
        super().__init__(f"{message} (achieved abs error {achieved:.3g})")
        self.achieved = achieved


class MonteCarloError(GrssError, RuntimeError):
    """A Monte Carlo estimate did not stabilise to the requested precision."""


class BootstrapError(GrssError, RuntimeError):
    """Too many bootstrap refits failed."""
