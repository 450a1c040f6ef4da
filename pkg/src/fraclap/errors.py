"""Exception and warning types raised across the package."""


class FraclapError(Exception):
    """Base class for all errors raised by fraclap."""


class PreconditionError(FraclapError, ValueError):
    """An input violates a documented precondition."""


class InvalidOrderError(PreconditionError):
    """A form order (m, s or sigma) is outside the supported range."""


class InvalidExponentError(PreconditionError):
    pass


class DivergentWeightError(PreconditionError):
    """The Hardy weight |x|^{-2s} is not locally integrable (2s >= n)."""


class UnsupportedOrderError(PreconditionError):
    pass


class AliasingError(FraclapError):
    """Data reaches the grid boundary or exceeds the resolvable band."""


class TruncationError(FraclapError):
    """A truncated sum/domain leaves too much mass in its tail."""


class ConvergenceError(FraclapError):
    pass


class QuadratureError(FraclapError):
    pass


class CalibrationError(FraclapError):
    pass


class ExtrapolationError(FraclapError):
    pass


class DegenerateInputError(FraclapError, ValueError):
    pass


class ConfigError(FraclapError):
    """Malformed or invalid run configuration."""


class ConvergenceWarning(UserWarning):
    pass


class IllConditionedWarning(UserWarning):
    pass


class TruncationWarning(UserWarning):
    pass


class ConfigParseError(ConfigError):
    """The configuration text is not a well-formed document."""
