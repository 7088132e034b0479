"""Exception types shared across the solver library."""


class DualEnkfError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(DualEnkfError, ValueError):
    pass


class NotPositiveDefinite(DualEnkfError, ValueError):
    def __init__(self, field, message=None):
        self.field = field
        super().__init__(message or f"{field} is not symmetric positive definite")


class NotControllable(DualEnkfError, ValueError):
    pass


class NotObservable(DualEnkfError, ValueError):
    pass


class StepSizeTooLarge(DualEnkfError, RuntimeError):
    """Integration lost positive definiteness; refine dt."""


class NoConvergence(DualEnkfError, RuntimeError):
    pass


class TooFewParticles(DualEnkfError, ValueError):
    pass


class NonFiniteState(DualEnkfError, RuntimeError):
    pass


class OracleFailure(DualEnkfError, RuntimeError):
    pass


class Diverged(DualEnkfError, RuntimeError):
    """A rollout exceeded the divergence cap (unstable gain).

    When raised from a gradient-descent loop the partial trace is attached
    as the ``trace`` attribute.
    """

    def __init__(self, message, trace=None):
        self.trace = trace
        super().__init__(message)


class GridMismatch(DualEnkfError, ValueError):
    pass


class OddDimension(DualEnkfError, ValueError):
    pass


class ParseError(DualEnkfError, ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        super().__init__(message)


class ValidationError(DualEnkfError, ValueError):
    """Carries every violated constraint found while validating a config."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
