"""Self-supervised auxiliary learning on heterogeneous graphs.

A weighting network, trained by one-step-lookahead meta-gradients,
softly selects which auxiliary tasks (meta-path prediction, degree,
distance, PageRank, clustering, partition) help a primary task; a hint
network makes hard auxiliary tasks solvable by mixing in its own
predictions.
"""

from .engine import SCHEMES
from .exceptions import (
    ConfigError,
    DataError,
    GraphFormatError,
    NumericsError,
    SelarError,
    TaskConstructionError,
)
from .graph import HeteroGraph, load_graph, make_splits, save_graph
from .synth import generate_synthetic
from .trainer import SelarTrainer

__version__ = "0.1.0"

__all__ = [
    "SCHEMES",
    "ConfigError",
    "DataError",
    "GraphFormatError",
    "HeteroGraph",
    "NumericsError",
    "SelarError",
    "SelarTrainer",
    "TaskConstructionError",
    "generate_synthetic",
    "load_graph",
    "make_splits",
    "save_graph",
    "__version__",
]
