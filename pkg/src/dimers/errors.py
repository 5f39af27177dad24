"""Exception hierarchy shared by all modules."""


class DimersError(Exception):
    """Base class for all package errors."""


class ValidationError(DimersError):
    """Input data violates a structural invariant (CLI exit code 2)."""


class NumericError(DimersError):
    """A numerical procedure failed or left its contract (CLI exit code 3)."""


class SeriesConvergenceError(NumericError):
    """A truncated Poincare series shows no geometric decay."""


class PoleError(NumericError):
    """Evaluation point coincides with (or is too close to) a pole."""


class QuadratureError(NumericError):
    """Adaptive quadrature did not reach the requested tolerance."""
