"""Distributed least squares with an iteratively pre-conditioned stochastic gradient method."""

from .datasets import Dataset, Partition, partition
from .errors import AssumptionError, DomainError, FormatError, InputError, NumericalError
from .simnet import RunConfig, RunResult, run_until_stop

__version__ = "0.1.0"

__all__ = [
    "Dataset", "Partition", "partition", "RunConfig", "RunResult", "run_until_stop",
    "InputError", "FormatError", "DomainError", "AssumptionError", "NumericalError",
]
