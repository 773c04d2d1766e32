"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so keep the hierarchy flat
and the classes meaningful on their own.
"""


class SdiQrngError(Exception):
    """Base class for all package-specific errors."""


class FormatError(SdiQrngError):
    """A data file is malformed, truncated, or of the wrong type."""


class AssumptionError(SdiQrngError):
    """A protocol security assumption is violated (e.g. mu > 0.5)."""


class DataInconsistentError(SdiQrngError):
    """Measured probabilities are incompatible with the declared energy
    bound.  Distinct from Hmin = 0: it signals a model violation."""


class SolverError(SdiQrngError):
    """The conic solver failed to return a usable certificate."""


class DegenerateChunkError(SdiQrngError):
    """A tracking chunk is unusable (an input class is missing or the
    centroids coincide)."""
