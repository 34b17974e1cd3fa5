"""Depth-primed multi-scale mixer segmentation toolkit."""

from .config import ConfigError, ModelConfig, TrainConfig, load_config
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import DatasetError, Sample, load_dataset
from .depth import (DepthMap, ExternalDepthSource, load_depth, replicate3,
                    stub_depth, zero_depth)
from .metrics import MetricReport, evaluate_dataset
from .model import Model, build, forward, make_multiscale, param_count
from .tensor import Tensor, ShapeError, backward
from .train import evaluate, infer, train

__all__ = [
    "Checkpoint", "ConfigError", "DatasetError", "DepthMap",
    "ExternalDepthSource", "MetricReport", "Model", "ModelConfig", "Sample",
    "ShapeError", "Tensor", "TrainConfig", "backward", "build",
    "evaluate", "evaluate_dataset", "forward", "infer", "load_checkpoint",
    "load_config", "load_dataset", "load_depth", "make_multiscale",
    "param_count", "replicate3", "save_checkpoint", "stub_depth", "train",
    "zero_depth",
]
