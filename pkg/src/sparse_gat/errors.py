"""Exception hierarchy shared by every module in the package."""


class GatError(Exception):
    """Base class for all errors raised by sparse_gat."""


class ShapeError(GatError, ValueError):
    """Array dimensions do not line up."""


class ParameterError(GatError, ValueError):
    """A scalar hyperparameter is outside its admissible range."""


class ConfigError(GatError, ValueError):
    """An invalid or inconsistent layer/model/run configuration."""


class ValidationError(GatError, ValueError):
    """Graph or bundle contents violate a structural invariant."""


class DataError(GatError, ValueError):
    """Labels or masks are inconsistent with the task."""


class FormatError(GatError, ValueError):
    """A binary or text file could not be parsed.

    ``offset`` is the byte offset (binary files) or 1-based line number
    (text files) where parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at {offset})"
        super().__init__(message)
        self.offset = offset


class ContractError(GatError, RuntimeError):
    """A caller broke a documented usage contract (stale cache, nondeterministic loss, ...)."""


class NonFiniteError(GatError, FloatingPointError):
    """NaN or Inf produced where finite values are required."""
