"""Relational graph attention networks with over-smoothing diagnostics."""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND
from .data import GraphDataset, MissingSpec, apply_missing, load_dataset, row_normalize
from .model import LayerParams, ModelConfig, RelationKind, model_forward
from .training import RunResult, TrainConfig, train_run

__all__ = [
    "GraphDataset",
    "KERNEL_BACKEND",
    "LayerParams",
    "MissingSpec",
    "ModelConfig",
    "RelationKind",
    "RunResult",
    "TrainConfig",
    "__version__",
    "apply_missing",
    "load_dataset",
    "model_forward",
    "row_normalize",
    "train_run",
]
