"""Incremental rank allocation for SVD-style low-rank adapters."""

from .adapter import SvdAdapter, new_adapter
from .allocator import AllocatorState, new_allocator
from .config import TrainConfig
from .scoring import ImportanceState, raw_score
from .trainer import train

__all__ = [
    "AllocatorState",
    "ImportanceState",
    "SvdAdapter",
    "TrainConfig",
    "new_adapter",
    "new_allocator",
    "raw_score",
    "train",
]
__version__ = "0.1.0"
