"""Minimal numpy 3D CNN engine for the patch denoiser."""
from .layers import batch_norm, conv3d_same, conv3d_same_backward, instance_norm, relu
from .losses import loss
from .network import (ArchConfig, LayerSpec, NetworkWeights, architecture_fingerprint,
                      canonical_architecture, forward, forward_backward, init_weights,
                      parameter_count)
from .serialization import ArchitectureMismatch, WeightFileError, load_weights, save_weights
from .training import Adam, TrainConfig, TrainingError, TrainResult, backward_and_step, evaluate_loss, train

__all__ = [
    "Adam", "ArchConfig", "ArchitectureMismatch", "LayerSpec", "NetworkWeights", "TrainConfig",
    "TrainResult", "TrainingError", "WeightFileError", "architecture_fingerprint", "backward_and_step",
    "batch_norm", "canonical_architecture", "conv3d_same", "conv3d_same_backward", "evaluate_loss",
    "forward", "forward_backward", "init_weights", "instance_norm", "load_weights", "loss",
    "parameter_count", "relu", "save_weights", "train",
]
