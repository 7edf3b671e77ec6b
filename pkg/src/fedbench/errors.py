"""Exception types shared across the package."""


class FedbenchError(Exception):
    """Base class for all fedbench errors."""


class ShapeError(FedbenchError):
    """Array dimensions do not match what an operation requires."""


class NumericError(FedbenchError):
    """Non-finite or otherwise unusable numeric input."""


class CapacityError(FedbenchError):
    """A dataset cannot supply the number of examples requested."""


class ConfigError(FedbenchError):
    """Invalid or inconsistent experiment configuration."""


class CheckpointError(FedbenchError):
    """Malformed checkpoint file (bad magic, truncation, shape mismatch)."""
