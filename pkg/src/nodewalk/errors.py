"""Exception types shared across the package."""


class DataError(ValueError):
    """Base class for malformed or inconsistent input data."""


class ParseError(DataError):
    """A data file line could not be parsed; message carries the line number."""

    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = str(path)
        self.lineno = lineno


class RangeError(DataError):
    """A node, class, or edge id is outside the valid range."""


class DimensionError(DataError):
    """Vector or matrix dimensions do not agree."""


class InsufficientLabelsError(DataError):
    """Fewer labeled nodes than classes; no usable split exists."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where finite arithmetic is required."""


class ContractError(RuntimeError):
    """An API precondition was violated (stale cache, mismatched trajectory)."""


class CompatibilityError(RuntimeError):
    """Checkpoint and current configuration disagree."""


class ConfigError(ValueError):
    """Invalid or unknown configuration key or value."""
