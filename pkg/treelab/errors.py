from typing import Optional


class TreeLabError(Exception):
    """Base class for every error raised by treelab."""


class StructuralError(TreeLabError):
    """A tree references a variable out of range or repeats one on a path."""


class TreeParseError(TreeLabError):
    def __init__(self, message: str, position: Optional[int] = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class RestrictionError(TreeLabError):
    """Duplicate or out-of-range variable in a restriction."""


class CapExceededError(TreeLabError):
    """A desk-scale size cap was exceeded."""


class AccessViolationError(TreeLabError):
    """A membership query was issued against an examples-only oracle."""


class SamplingExhaustedError(TreeLabError):
    """Rejection sampling found no consistent example within its attempt budget."""


class ResourceLimitError(TreeLabError):
    """A search space is larger than the configured hard cap."""


class ConfigError(TreeLabError, ValueError):
    """Invalid learner, budget, or target configuration."""
