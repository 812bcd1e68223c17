"""Exception and warning types shared across the package."""


class CascadeError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CascadeError, ValueError):
    """Invalid parameters or grid configuration."""


class InvalidFieldError(CascadeError, ValueError):
    """A sampled field contains NaN/Inf or violates its declared metadata."""


class UnsupportedOrderError(CascadeError, ValueError):
    """A derivative order outside the supported range was requested."""


class RegimeError(CascadeError, ValueError):
    """Parameters fall outside the regime where the construction is defined."""


class CascadeDegeneracyError(CascadeError):
    """Bubble supports overlap or touch the origin, so the far-field expansions fail."""


class StiffnessError(CascadeError):
    """Adaptive step control underflowed."""


class StepSizeError(CascadeError):
    """A requested time step violates the CFL restriction."""


class CoverageError(CascadeError):
    """A trajectory does not cover the window a diagnostic needs."""


class ResolutionError(CascadeError):
    """Grid resolution is too coarse for the requested derivative content."""


class ExtrapolationError(CascadeError):
    """Evaluation requested outside the resolved range of a field."""


class OverflowBreakdown(CascadeError, FloatingPointError):
    """Non-finite values appeared during time integration."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ProbeError(CascadeError):
    """Degenerate scales in the self-similarity probe."""


class SchemaMismatchError(CascadeError):
    """Two run manifests cannot be compared."""


class IllConditionedEvaluationWarning(RuntimeWarning):
    """Evaluation point sits on a support endpoint."""


class DivergenceWarning(RuntimeWarning):
    """A geometric tail ratio is >= 1 so the bubble sum diverges."""


class PrecisionWarning(RuntimeWarning):
    """Too few resolved bubbles for a reliable exponent estimate."""
