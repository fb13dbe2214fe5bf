"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError and
CheckpointError -> 3, DivergenceError -> 4.
"""


class ConfigError(ValueError):
    """Bad or missing configuration (unknown key, invalid value, absent path)."""


class DataError(ValueError):
    """Dataset file cannot be parsed or violates its declared structure."""


class CheckpointError(ValueError):
    """Checkpoint file is corrupt or inconsistent with the model manifest."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""
