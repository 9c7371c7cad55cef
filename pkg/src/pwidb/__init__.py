"""Piece-wise incremental data balancing for imbalanced, windowed streams."""

from .core import MAJORITY, MINORITY, Frame, SeedPolicy, concat, imbalance_ratio, split_train_test
from .forest import ForestParams
from .racing import RaceConfig, race
from .resampling import BalancerSpec, apply
from .streaming import plan_chunks, run_accumulative, run_batch, run_pwidb

__version__ = "0.1.0"

__all__ = [
    "MAJORITY",
    "MINORITY",
    "Frame",
    "SeedPolicy",
    "concat",
    "imbalance_ratio",
    "split_train_test",
    "ForestParams",
    "RaceConfig",
    "race",
    "BalancerSpec",
    "apply",
    "plan_chunks",
    "run_batch",
    "run_accumulative",
    "run_pwidb",
]
