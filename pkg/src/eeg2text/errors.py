"""Exception types shared across the toolkit.

The CLI maps each family to a distinct exit code.
"""


class ConfigError(ValueError):
    """Invalid or incompatible configuration."""


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required."""


class CheckpointError(RuntimeError):
    """Checkpoint could not be read or does not match the requested config."""


class ProvenanceError(RuntimeError):
    """A component was trained on data that breaks the zero-shot setting."""
