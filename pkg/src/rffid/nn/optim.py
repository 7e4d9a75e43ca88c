"""Plain stochastic gradient descent, the only optimizer in the package."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError
from .params import ParamSet


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.01
    epochs: int = 40
    batch_size: int = 1
    seed: int = 0
    early_stop_patience: int = 5
    early_stop_min_delta: float = 1e-4

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")


def sgd_step(params: ParamSet, grads: ParamSet, learning_rate: float) -> ParamSet:
    """In-place update: theta <- theta - lr * grad, for every named gradient."""
    for name, grad in grads.items():
        if name not in params:
            raise ConfigError(f"gradient for unknown parameter {name!r}")
        value = params[name]
        if value.shape != grad.shape:
            raise ConfigError(
                f"gradient shape {grad.shape} does not match parameter "
                f"{name!r} shape {value.shape}"
            )
        value -= learning_rate * grad
    return params
