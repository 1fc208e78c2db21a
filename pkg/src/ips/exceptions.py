"""Exception hierarchy shared across the package."""


class IpsError(Exception):
    """Base class for all package-specific errors."""


class SchemaError(IpsError):
    """CSV column roles are missing or inconsistent."""


class ParseError(IpsError):
    """A cell could not be parsed as a number."""


class DataValidationError(IpsError):
    """A dataset violates a structural invariant (non-binary treatment, NaNs, ...)."""


class SeparationError(IpsError):
    """Perfect separation detected while fitting a logistic model."""


class ConvergenceError(IpsError):
    """An iterative fit failed to converge.

    Carries the best iterate found so far in ``best`` when available.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class WeakInstrumentError(IpsError):
    """Estimated complier mass is non-positive (irrelevant/invalid instrument)."""


class SingularInformationError(IpsError):
    """The curvature matrix of the fitting criterion is numerically singular."""


class UnstableVarianceError(IpsError):
    """A variance plug-in is unreliable (e.g. near-zero density at a quantile)."""
