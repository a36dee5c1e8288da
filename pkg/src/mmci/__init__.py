"""Multi-relational multimodal causal intervention (MMCI) at desk scale."""

from .data import GenSpec, generate
from .graph import RelationKind, Sample, build_graph
from .metrics import evaluate
from .model import ModelConfig, forward, init_params, load_checkpoint, save_checkpoint
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "GenSpec",
    "ModelConfig",
    "RelationKind",
    "Sample",
    "TrainConfig",
    "build_graph",
    "evaluate",
    "forward",
    "generate",
    "init_params",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]
