"""Spiking graph contrastive learning with 1-bit node embeddings."""

from .analytics import (EnergyReport, cka, cka_matrix, diagonal_dominance, energy_binary_gnn,
                        energy_full_precision, energy_spikegcl, sparsity)
from .contrastive import ContrastConfig
from .encoder import BinaryEmbedding, SpikeTrain, load_embedding, save_embedding
from .errors import (ConfigError, DataError, DegenerateError, DimensionError, NumericError,
                     UndefinedSimilarityError, UsageError, VerificationError)
from .estimator import SpikingGCL
from .graph import CsrGraph, from_edges, load_graph, write_graph
from .neurons import NeuronConfig
from .ops import OptimConfig
from .probe import LinearProbe, evaluate_trials, make_split
from .theory import verify_bound
from .training import TrainConfig, embed, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "BinaryEmbedding", "ConfigError", "ContrastConfig", "CsrGraph", "DataError",
    "DegenerateError", "DimensionError", "EnergyReport", "LinearProbe", "NeuronConfig",
    "NumericError", "OptimConfig", "SpikeTrain", "SpikingGCL", "TrainConfig",
    "UndefinedSimilarityError", "UsageError", "VerificationError", "cka", "cka_matrix",
    "diagonal_dominance", "embed", "energy_binary_gnn", "energy_full_precision",
    "energy_spikegcl", "evaluate_trials", "from_edges", "load_checkpoint", "load_embedding",
    "load_graph", "make_split", "save_checkpoint", "save_embedding", "sparsity", "train",
    "verify_bound", "write_graph",
]
