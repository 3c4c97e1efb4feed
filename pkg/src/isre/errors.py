"""Exception types raised by the solver layers."""


class SREError(Exception):
    """Base class for every failure the library reports."""


class NonSymmetric(SREError):
    pass


class NotPositiveDefinite(SREError):
    """A matrix that must be positive definite is not.

    ``node`` is the grid index where the constraint failed, when known.
    """

    def __init__(self, message, node=None, min_eig=None):
        super().__init__(message)
        self.node = node
        self.min_eig = min_eig


class NonFinite(SREError):
    pass


class ModeMismatch(SREError):
    pass


class GridMismatch(SREError):
    pass


class BlowUpDetected(SREError):
    """Backward integration left the overflow guard.

    ``last_finite`` is the index of the last grid node whose value is finite
    and inside the guard; ``path`` holds the partial trajectory.
    """

    def __init__(self, message, last_finite, path=None):
        super().__init__(message)
        self.last_finite = last_finite
        self.path = path


class NoConvergence(SREError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class LostPositivity(SREError):
    def __init__(self, message, node=None, min_eig=None, report=None):
        super().__init__(message)
        self.node = node
        self.min_eig = min_eig
        self.report = report


class AssumptionViolation(SREError):
    """Raised by the pipeline when a hypothesis check fails without override."""

    def __init__(self, message, reports=None):
        super().__init__(message)
        self.reports = reports or []
