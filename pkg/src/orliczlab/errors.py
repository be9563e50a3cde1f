"""Exception hierarchy shared by all modules."""


class OrliczError(Exception):
    """Base class for every error raised by the package."""


class EvaluationError(OrliczError):
    """A model or integrand produced a non-finite value."""

    def __init__(self, message, x=None, t=None):
        super().__init__(message)
        self.x = x
        self.t = t


class RangeError(OrliczError):
    """A requested level lies above the attainable range on the search interval."""


class WindowError(OrliczError):
    """A supremum could not be localized inside the search window."""


class ParameterError(OrliczError, ValueError):
    """Invalid parameters passed to a constructor or operation."""


class ConvexificationError(OrliczError):
    """Sampled input cannot be replaced by an equivalent convex function."""


class GrowthError(OrliczError):
    """A nonlinearity failed the growth-function certification."""

    def __init__(self, message, sample=None):
        super().__init__(message)
        self.sample = sample


class MonotonicityError(OrliczError):
    """A nonlinearity failed the monotonicity check on a sampled pair."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class CalibrationError(OrliczError):
    """The approximant calibration loop could not certify ellipticity."""

    def __init__(self, message, worst=None):
        super().__init__(message)
        self.worst = worst


class SolverError(OrliczError):
    """A discrete solve failed (line search breakdown, non-finite energy)."""

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate


class NonconvergenceError(SolverError):
    """An iterative solve stagnated."""

    def __init__(self, message, history=None, iterate=None):
        super().__init__(message, iterate=iterate)
        self.history = history


class AdmissibilityError(OrliczError):
    """A ball violates the size caps required by the comparison pipeline."""

    def __init__(self, message, caps=None):
        super().__init__(message)
        self.caps = caps


class ProbeError(OrliczError):
    """A probe could not be evaluated (unresolvable radii, violated caps)."""


class ConfigError(OrliczError):
    """Experiment configuration failed validation."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path
