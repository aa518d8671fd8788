"""Spiking neural network finger-velocity decoder."""

from ._snndec import (
    ConfigError,
    DataError,
    NetworkConfig,
    NumericalError,
    QuantizedModel,
    QuantSpec,
    ScaleRule,
    SparseEngine,
    TrainedDecoder,
    UsageError,
    __version__,
    count_ops,
    footprint,
    make_synthetic,
    pearson,
    rmse,
    simulate,
    train,
)

__all__ = [
    "ConfigError",
    "DataError",
    "NetworkConfig",
    "NumericalError",
    "QuantizedModel",
    "QuantSpec",
    "ScaleRule",
    "SparseEngine",
    "TrainedDecoder",
    "UsageError",
    "__version__",
    "count_ops",
    "footprint",
    "make_synthetic",
    "pearson",
    "rmse",
    "simulate",
    "train",
]
