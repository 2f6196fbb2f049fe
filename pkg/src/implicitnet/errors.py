"""Exception types shared across the package."""


class ImplicitNetError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(ImplicitNetError):
    """Operands have incompatible shapes."""


class SingularMatrixError(ImplicitNetError):
    """A linear solve hit a (numerically) singular matrix."""


class SolverDivergedError(ImplicitNetError):
    """The nonlinear solver failed to reach the requested residual."""

    def __init__(self, message, residual=None, layer=None):
        super().__init__(message)
        self.residual = residual
        self.layer = layer


class NonFiniteLossError(ImplicitNetError):
    """A loss evaluation produced NaN or Inf."""


class InvalidCountError(ImplicitNetError):
    """A dataset generator was asked for an unusable number of points."""


class ParseError(ImplicitNetError):
    """A file could not be parsed; carries the offending line number."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
