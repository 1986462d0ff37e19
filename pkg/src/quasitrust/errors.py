"""Exception hierarchy."""


class QuasitrustError(Exception):
    """Base class for all library errors."""


class InvalidGridError(QuasitrustError, ValueError):
    pass


class WeightMismatchError(QuasitrustError, ValueError):
    pass


class ConfigError(QuasitrustError, ValueError):
    pass


class NonConvergenceError(QuasitrustError, RuntimeError):
    """An iterative method stopped without meeting its tolerance.

    Whatever the method had at that point is kept on the exception so
    callers can inspect or salvage it.
    """

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context
        for key, value in context.items():
            setattr(self, key, value)


class EigenSolverError(NonConvergenceError):
    pass


class TrsConvergenceError(NonConvergenceError):
    pass


class StagnationError(NonConvergenceError):
    pass


class OuterConvergenceError(NonConvergenceError):
    pass
