"""chromawarp: reference-based line-art sequence colorization.

A previous colored frame is warped into alignment with the next sketch by
matching learned feature correlations, then decoded coarse-to-fine into the
next colored frame.  The package ships the warp kernels, the generator, the
training objective, a dataset construction pipeline for animation footage,
and a stride-based consistency evaluation harness with CSV/figure reports.
"""

from .errors import (
    CheckpointError,
    ChromawarpError,
    ConfigError,
    DimensionError,
    TrainingDivergedError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "ChromawarpError",
    "DimensionError",
    "ValidationError",
    "ConfigError",
    "CheckpointError",
    "TrainingDivergedError",
    "__version__",
]
