"""Gauss-Newton training of two-layer networks with self-concordant
smoothed-L1 regularization, plus the experiment tooling around it."""

from .backend import BACKEND
from .model import NetworkConfig, NetworkParams
from .optimizer import TrainSchedule, train
from .regularizer import GscRegularizer

__all__ = [
    "BACKEND",
    "NetworkConfig",
    "NetworkParams",
    "GscRegularizer",
    "TrainSchedule",
    "train",
]

__version__ = "0.1.0"
