"""
Error hierarchy shared by every layer of the toolkit.

Each error carries the process exit code the CLI maps it to and a short
machine-parsable code used as the single-line error prefix.
"""


class AXUNetError(Exception):
    """Base class for all toolkit errors."""

    exit_code: int = 1

    @property
    def code(self) -> str:
        return f"AXUNET-E{self.exit_code}"

    def one_line(self) -> str:
        """Render as a single machine-parsable line."""
        message = " ".join(str(self).split())
        return f"{self.code} {type(self).__name__}: {message}"


class ConfigError(AXUNetError):
    """Bad arguments, bad or unknown config keys, architecture mismatch."""

    exit_code = 2


class DataError(AXUNetError):
    """Missing or malformed data on disk or in memory."""

    exit_code = 3


class ShapeError(AXUNetError, ValueError):
    """Shape or dimension contract violation."""

    exit_code = 3


class NumericError(AXUNetError):
    """Non-finite values where finite ones are required."""

    exit_code = 4
