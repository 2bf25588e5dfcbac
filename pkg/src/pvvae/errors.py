"""Exception types shared across the package."""


class PvvaeError(Exception):
    """Base class for all package errors; the CLI maps these to exit code 1."""


class ConfigError(PvvaeError):
    """Invalid configuration (bad stage factorization, token shape mismatch, ...)."""


class ShapeError(PvvaeError):
    """Array shape violates an operation's contract."""


class InputError(PvvaeError):
    """Argument outside the valid range (k too large, indivisible T, ...)."""


class NumericError(PvvaeError):
    """Non-finite values where finite ones are required."""


class FormatError(PvvaeError):
    """Malformed tensor container (bad magic, header, or payload)."""


class CheckpointError(PvvaeError):
    """Checkpoint cannot be loaded (version/architecture mismatch)."""


class TrainingDiverged(PvvaeError):
    """Training aborted on a non-finite loss; carries the offending report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DegenerateInputError(PvvaeError):
    """Input carries no usable signal (e.g. zero variance fed to PCA)."""
