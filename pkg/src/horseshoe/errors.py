"""Exception hierarchy shared by the whole package.

Two of these are *signals* rather than failures: ``StripBoundary`` tells the
caller a base point sits exactly on a strip boundary (the caller picks a
side), and an empty fiber is reported by returning ``None`` from the
geometry routines, not by raising.  Everything else is a genuine error.
"""


class HorseshoeError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(HorseshoeError):
    """A constructor or operation argument is outside its admissible range."""


class OutOfDomainError(HorseshoeError):
    """A point lies outside the strip (or image strip) of the requested branch."""

    def __init__(self, message, strip=None, point=None):
        super().__init__(message)
        self.strip = strip
        self.point = point


class StripBoundary(HorseshoeError):
    """Signal: a base point coincides with a strip boundary.

    Carries the indices of the strips meeting at the point so the caller can
    choose a side.
    """

    def __init__(self, x, strips):
        super().__init__(f"base point {x!r} lies on a strip boundary {strips}")
        self.x = x
        self.strips = tuple(strips)


class ItineraryError(HorseshoeError):
    """A requested backward itinerary is infeasible for the given point."""


class ResolutionError(HorseshoeError):
    """A radius or scale is below the resolution the data can support."""


class DegenerateScaleError(HorseshoeError):
    """A scale parameter degenerates the construction (e.g. r >= |J|)."""


class DegenerateExtensionError(HorseshoeError):
    """The extended fiber adds no usable margin around the unit fiber."""


class ConvergenceError(HorseshoeError):
    """An iterative solve failed to reach its tolerance.

    ``history`` holds the residuals seen so far, most recent last.
    """

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class SampleDiscardError(HorseshoeError):
    """Too many orbit samples were discarded for the estimate to be trusted."""

    def __init__(self, message, discarded, total):
        super().__init__(message)
        self.discarded = discarded
        self.total = total


class BudgetError(HorseshoeError):
    """An enumeration or pair sweep exceeded its configured budget."""


class CacheError(HorseshoeError):
    """A cache file failed its version or digest check."""


class ConfigError(HorseshoeError):
    """Run configuration is invalid (CLI exit code 2)."""


class StageError(HorseshoeError):
    """A pipeline stage failed (CLI exit code 3).

    Wraps the original exception and remembers the stage name so the partial
    manifest can point at it.
    """

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
