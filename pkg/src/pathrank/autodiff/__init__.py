"""Minimal reverse-mode automatic differentiation over dense arrays."""

from pathrank.autodiff.errors import AutodiffError, BackwardError, DimensionError, NonFiniteError
from pathrank.autodiff.tape import Tape, TapeEntry, Tensor, backward


__all__ = [
    "AutodiffError",
    "BackwardError",
    "DimensionError",
    "NonFiniteError",
    "Tape",
    "TapeEntry",
    "Tensor",
    "backward",
]
