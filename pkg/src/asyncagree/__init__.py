"""Simulator and analysis toolkit for randomized asynchronous binary agreement
under window-constrained adversaries with resetting and crash failures."""

from .protocol import Thresholds, default_thresholds, validate_thresholds
from .simnet import AcceptableWindow, Execution, new_execution, run

__version__ = "0.1.0"

__all__ = [
    "Thresholds",
    "default_thresholds",
    "validate_thresholds",
    "AcceptableWindow",
    "Execution",
    "new_execution",
    "run",
]
