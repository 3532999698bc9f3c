"""Weighted-stacked pyramid sequence networks for hysteretic response regression.

Subpackage map:

- ``autodiff``       reverse-mode tape, Tensor ops, finite-difference checker
- ``layers``         LSTM/GRU/attention/transformer building blocks
- ``fusion``         level-weighted feature fusion
- ``architectures``  model builders, capacity matching, checkpoints
- ``hysteresis``     Bouc-Wen and cyclic-steel simulators, excitation synthesis
- ``datasets``       dataset assembly, normalization, disk formats
- ``training``       Adam trainer, evaluation metrics
- ``experiments``    principle verification, sweeps, architecture comparison
- ``cli``            command-line entry point
"""

from wspnet.errors import (
    ConfigurationError,
    ContractError,
    DegenerateRangeError,
    DimensionError,
    NumericError,
    StabilityError,
    WspnetError,
)
from wspnet.autodiff import Tape, Tensor, backward, finite_diff_check
from wspnet.backend import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigurationError",
    "ContractError",
    "DegenerateRangeError",
    "DimensionError",
    "NumericError",
    "StabilityError",
    "Tape",
    "Tensor",
    "WspnetError",
    "backward",
    "finite_diff_check",
    "__version__",
]
