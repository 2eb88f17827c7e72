"""Exception types shared across the package."""


class GdlnError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(GdlnError, ValueError):
    """A parameter is outside its documented domain."""


class ShapeError(GdlnError, ValueError):
    """Array shapes are inconsistent with the operation's contract."""


class DegenerateStatisticsError(GdlnError, ValueError):
    """Requested statistics are undefined, e.g. a mask with no active datapoints."""


class UnderParameterizedError(GdlnError, ValueError):
    """A pathway has fewer hidden units than the rank it must represent."""


class InapplicableError(GdlnError, ValueError):
    """A check's mathematical precondition does not hold for the given data."""


class DivergenceError(GdlnError, RuntimeError):
    """Training produced a non-finite or runaway loss.

    Carries the epoch at which divergence was detected.
    """

    def __init__(self, message, epoch):
        super().__init__(message)
        self.epoch = epoch
