"""Exception hierarchy shared by all modules."""


class FastSlowError(Exception):
    """Base class for library errors."""


class InvalidParameterError(FastSlowError, ValueError):
    pass


class InvalidMatrixError(FastSlowError, ValueError):
    pass


class InvalidMeasureError(FastSlowError, ValueError):
    pass


class NonUniqueEquilibriumError(FastSlowError):
    pass


class NonUniqueLimitError(FastSlowError):
    pass


class InvalidPartitionError(FastSlowError, ValueError):
    pass


class InternalConsistencyError(FastSlowError):
    pass


class BoundaryStateError(FastSlowError, ValueError):
    """Entropy gradient requested at a state with a zero component."""


class RequiresDetailedBalanceError(FastSlowError):
    pass


class InvalidInitialStateError(FastSlowError, ValueError):
    pass


class OutOfRangeError(FastSlowError, ValueError):
    pass


class UnboundedOrDegenerateError(FastSlowError):
    """The Legendre problem is not coercive."""


class InvalidVelocityError(FastSlowError, ValueError):
    pass


class DualityGapError(FastSlowError):
    pass


class InvalidCurveError(FastSlowError, ValueError):
    pass


class ConfigError(FastSlowError):
    """Configuration or input file rejected; carries per-field diagnostics."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))
