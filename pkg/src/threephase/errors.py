"""Exception hierarchy shared by the estimation modules and the CLI."""


class ThreePhaseError(Exception):
    """Base class for every error raised by this package."""


class InvalidDesignError(ThreePhaseError):
    """A sampling design is malformed or cannot be applied to the given frame."""


class EnumerationTooLargeError(ThreePhaseError):
    """Exhaustive enumeration was requested beyond the configured cap.

    Use :func:`threephase.oracle.monte_carlo` for populations of this size.
    """


class UnsupportedEnumerationError(ThreePhaseError):
    """The design has no enumerable support (e.g. a ``Table`` design)."""


class DataIntegrityError(ThreePhaseError):
    """Input values are missing, inconsistent or out of range."""


class VarianceUndefinedError(ThreePhaseError):
    """A pair probability required by the variance estimator is missing or zero."""

    def __init__(self, message: str, pair=None):
        super().__init__(message)
        self.pair = pair
