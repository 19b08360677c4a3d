"""Exception types shared across the package."""


class ChromawarpError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(ChromawarpError, ValueError):
    """Inputs have incompatible or unsupported shapes."""


class ValidationError(ChromawarpError, ValueError):
    """Input values violate a documented precondition (NaN/Inf, range, ...)."""


class ConfigError(ChromawarpError, ValueError):
    """A configuration file or flag set is invalid (unknown key, bad value)."""


class CheckpointError(ChromawarpError, RuntimeError):
    """A checkpoint is unreadable or does not match the requested config."""


class TrainingDivergedError(ChromawarpError, RuntimeError):
    """Training hit a non-finite loss; a diagnostic checkpoint was written."""
