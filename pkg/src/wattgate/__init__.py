"""wattgate: energy disaggregation with gate-multiplied convolutional networks.

Subpackages and modules:
  autodiff   reverse-mode AD over dense float64 tensors
  kernels    numba/numpy hot kernels (conv, Adam) behind one dispatch
  nn         init, losses, Adam, checkpoints
  data       channel IO, gap handling, normalization, windowing
  synth      synthetic household generator
  models     gated regressors and baselines
  metrics    MAE / scale-adjusted error, histograms, reconstruction
  pipeline   train/eval/sweep orchestration
  cli        command-line entry point
"""

from .autodiff import Tape, Tensor, backward
from .errors import (
    ConfigurationError,
    DataError,
    NumericalError,
    ParseError,
    UsageError,
    WattgateError,
)

__version__ = "0.1.0"

__all__ = [
    "Tape",
    "Tensor",
    "backward",
    "WattgateError",
    "ConfigurationError",
    "DataError",
    "ParseError",
    "UsageError",
    "NumericalError",
    "__version__",
]
