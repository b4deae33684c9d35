"""Convolutional patch classifier written directly on numpy."""
from .architectures import default_architecture, desk_architecture, sd_architecture, three_patterns
from .layers import (conv_backward, conv_forward, lrn_backward, lrn_forward, maxpool_backward,
                     maxpool_forward, relu, softmax)
from .network import (LayerSpec, NetworkModel, accuracy, backward, forward, infer_shapes, init_model,
                      loss_and_gradients, predict_patch, predict_proba, validate_architecture)
from .solver import (SolverConfig, SolverState, TrainingDiverged, TrainReport, compute_iterations,
                     train)

__all__ = [
    "LayerSpec", "NetworkModel", "SolverConfig", "SolverState", "TrainReport", "TrainingDiverged",
    "accuracy", "backward", "compute_iterations", "conv_backward", "conv_forward", "default_architecture",
    "desk_architecture", "forward", "infer_shapes", "init_model", "loss_and_gradients", "lrn_backward",
    "lrn_forward", "maxpool_backward", "maxpool_forward", "predict_patch", "predict_proba", "relu",
    "sd_architecture", "softmax", "three_patterns", "train", "validate_architecture",
]
