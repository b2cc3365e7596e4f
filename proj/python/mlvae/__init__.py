"""Multi-level VAE with an adversarial mutual-information penalty."""

from ._core import (
    ArgumentError,
    Config,
    ConfigError,
    Error,
    FormatError,
    InvalidDistribution,
    Model,
    ShapeError,
    StateError,
    TrainingDiverged,
    accumulate,
    config_keys,
    dv_bound,
    kl_to_standard_normal,
    update_lambda,
)

__all__ = [
    "ArgumentError",
    "Config",
    "ConfigError",
    "Error",
    "FormatError",
    "InvalidDistribution",
    "Model",
    "ShapeError",
    "StateError",
    "TrainingDiverged",
    "accumulate",
    "config_keys",
    "dv_bound",
    "kl_to_standard_normal",
    "update_lambda",
]
