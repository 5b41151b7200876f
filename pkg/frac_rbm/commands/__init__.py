"""Initializes the commands package and imports command provider classes."""

from .bench_commands import BenchCommands
from .eim_commands import EIMCommands
from .eval_commands import EvalCommands
from .train_commands import TrainCommands

__all__ = [
    "BenchCommands",
    "EIMCommands",
    "EvalCommands",
    "TrainCommands",
]
