"""Exception hierarchy shared across the package."""


class LlgaError(Exception):
    """Base class for all errors raised by this package."""


class GraphFormatError(LlgaError):
    """Malformed or out-of-contract graph input (edge lists, features, labels)."""


class ValidationError(LlgaError):
    """An argument or data structure violates an operation's precondition."""


class ConvergenceError(LlgaError):
    """An iterative solver failed to reach its tolerance."""


class SequenceFormatError(LlgaError):
    """Corrupt, truncated, or mismatched binary sequence/weight/cache file."""


class ConfigError(LlgaError):
    """Invalid run configuration (unknown key, missing value, bad type)."""


class TrainingError(LlgaError):
    """Training aborted (e.g. non-finite loss); carries the failing step."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step
