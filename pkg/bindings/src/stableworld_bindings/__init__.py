"""Raw-buffer bindings for hosting the stableworld eviction engine."""

from .engine import (
    BindingError,
    BoundEngine,
    ClosedEngineError,
    DimensionMismatchError,
    InvalidConfigError,
    ScoringError,
    UnknownPresetError,
    close,
    create_engine,
    push,
    similarity,
)

__all__ = [
    "BindingError",
    "BoundEngine",
    "ClosedEngineError",
    "DimensionMismatchError",
    "InvalidConfigError",
    "ScoringError",
    "UnknownPresetError",
    "close",
    "create_engine",
    "push",
    "similarity",
]

__version__ = "0.1.0"
