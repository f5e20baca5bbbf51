"""Bipartite graph embedding via masked multi-hop neighbor prediction."""

from .graph import BipartiteGraph, GraphFormatError, load_edge_list, save_edge_list
from .sampler import MaskedSubgraph, SamplerConfig, TokenSequence
from .negatives import NegativeSet, WalkConfig
from .encoder import EncoderConfig, ModelParams, encode
from .objectives import LossConfig
from .trainer import AdagradState, TrainConfig, checkpoint_load, checkpoint_save, train
from .evaluator import EvalConfig, MetricsReport, evaluate

__version__ = "0.1.0"

__all__ = [
    "AdagradState",
    "BipartiteGraph",
    "EncoderConfig",
    "EvalConfig",
    "GraphFormatError",
    "LossConfig",
    "MaskedSubgraph",
    "MetricsReport",
    "ModelParams",
    "NegativeSet",
    "SamplerConfig",
    "TokenSequence",
    "TrainConfig",
    "WalkConfig",
    "checkpoint_load",
    "checkpoint_save",
    "encode",
    "evaluate",
    "load_edge_list",
    "save_edge_list",
    "train",
    "__version__",
]
