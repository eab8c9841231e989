"""Exception types shared across the package."""


class SgclError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SgclError, ValueError):
    """Invalid argument or configuration value."""


class DataError(SgclError):
    """Unreadable or inconsistent input data."""


class ParseError(DataError, ValueError):
    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class DimensionError(SgclError, ValueError):
    """Array shapes do not line up."""


class NumericError(SgclError, ArithmeticError):
    """A NaN or infinity reached a kernel boundary."""


class UsageError(SgclError, RuntimeError):
    """An operation was called in a state or mode it does not support."""


class DegenerateError(SgclError, ValueError):
    """Too few samples or classes to do anything meaningful."""


class UndefinedSimilarityError(SgclError, ValueError):
    """Similarity of a zero-variance representation is undefined."""


class VerificationError(SgclError):
    """A checked bound or identity did not hold."""
