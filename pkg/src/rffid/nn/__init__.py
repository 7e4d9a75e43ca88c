"""Minimal tensor/layer engine: conv-pool-dense layers with analytic
backward passes, the two training losses, SGD, and finite-difference
gradient verification.

The convolution and pooling inner loops run on a compiled extension when
available, with a numpy fallback selected at import (see ``backend``).
"""

from . import backend
from .gradcheck import (
    grad_check_classifier,
    grad_check_siamese,
    max_relative_error,
    numeric_gradient,
)
from .layers import (
    AdaptiveAvgPool,
    Conv3x3,
    Dense,
    Flatten,
    InputStandardize,
    Layer,
    MaxPool2x2,
    Network,
    ReLU,
    Softmax,
)
from .losses import contrastive_loss, cross_entropy
from .optim import OptimizerConfig, sgd_step
from .params import ParamSet, load_checkpoint, save_checkpoint

__all__ = [
    "AdaptiveAvgPool",
    "Conv3x3",
    "Dense",
    "Flatten",
    "InputStandardize",
    "Layer",
    "MaxPool2x2",
    "Network",
    "OptimizerConfig",
    "ParamSet",
    "ReLU",
    "Softmax",
    "backend",
    "contrastive_loss",
    "cross_entropy",
    "grad_check_classifier",
    "grad_check_siamese",
    "load_checkpoint",
    "max_relative_error",
    "numeric_gradient",
    "save_checkpoint",
    "sgd_step",
]
