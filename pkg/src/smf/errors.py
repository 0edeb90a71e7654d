"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: config problems exit 2, data
problems exit 3, runtime aborts (NaN losses, corrupt files mid-run) exit 4.
"""


class SmfError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SmfError):
    """Invalid or inconsistent configuration values."""

    exit_code = 2


class DataError(SmfError):
    """Malformed dataset files or out-of-contract data values."""

    exit_code = 3


class DimensionError(SmfError):
    """Tensor/array shape mismatch."""

    exit_code = 2


class GradientError(SmfError):
    """Gradients missing or invalid where an optimizer step needs them."""

    exit_code = 4


class LifecycleError(SmfError):
    """Environment stepped outside an active episode."""

    exit_code = 4


class ModelFileError(SmfError):
    """Corrupt, truncated, or incompatible model checkpoint."""

    exit_code = 3


class TrainingAbort(SmfError):
    """Training stopped because a loss became non-finite."""

    exit_code = 4
