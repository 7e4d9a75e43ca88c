"""Differentiable layers and network composition.

All layers operate on batched float64 arrays (NCHW for feature maps).
Convolutions are fixed at 3x3 kernels, stride 1, zero padding 1; max
pooling is fixed at 2x2, stride 2. Forward passes return a context object
that the matching backward pass consumes; parameter gradients accumulate
into a ParamSet keyed like the parameters themselves.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, InputError
from . import backend
from .params import ParamSet

_STANDARDIZE_EPS = 1e-12


class Layer:
    kind: str = "?"

    def param_shapes(self, in_shape: tuple) -> dict[str, tuple]:
        return {}

    def out_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def forward(self, params: ParamSet, x: np.ndarray):
        raise NotImplementedError

    def backward(self, params: ParamSet, ctx, dy: np.ndarray, grads: ParamSet):
        raise NotImplementedError


class InputStandardize(Layer):
    """Per-sample zero-mean unit-variance transform over all input elements.

    Keeps archived spectrograms physical (dB) while giving the networks a
    scale-free input."""

    kind = "input_standardize"

    def forward(self, params, x):
        axes = tuple(range(1, x.ndim))
        mean = x.mean(axis=axes, keepdims=True)
        sigma = np.sqrt(x.var(axis=axes, keepdims=True) + _STANDARDIZE_EPS)
        y = (x - mean) / sigma
        return y, (y, sigma)

    def backward(self, params, ctx, dy, grads):
        y, sigma = ctx
        axes = tuple(range(1, dy.ndim))
        dy_mean = dy.mean(axis=axes, keepdims=True)
        proj = (dy * y).mean(axis=axes, keepdims=True)
        return (dy - dy_mean - y * proj) / sigma


class Conv3x3(Layer):
    kind = "conv3x3"

    def __init__(self, name: str, in_channels: int, out_channels: int):
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels

    def param_shapes(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.in_channels:
            raise ConfigError(
                f"layer {self.name}: expected input (C={self.in_channels}, H, W), "
                f"got {in_shape}"
            )
        return {
            f"{self.name}.w": (self.out_channels, self.in_channels, 3, 3),
            f"{self.name}.b": (self.out_channels,),
        }

    def out_shape(self, in_shape):
        return (self.out_channels, in_shape[1], in_shape[2])

    def forward(self, params, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ConfigError(
                f"layer {self.name}: expected (B, {self.in_channels}, H, W), "
                f"got {x.shape}"
            )
        w = params[f"{self.name}.w"]
        b = params[f"{self.name}.b"]
        y = backend.active().conv3x3_forward(x, w, b)
        return y, x

    def backward(self, params, ctx, dy, grads):
        x = ctx
        w = params[f"{self.name}.w"]
        dx, dw, db = backend.active().conv3x3_backward(x, w, dy)
        grads[f"{self.name}.w"] = dw
        grads[f"{self.name}.b"] = db
        return dx


class MaxPool2x2(Layer):
    kind = "maxpool2x2"

    def out_shape(self, in_shape):
        return (in_shape[0], in_shape[1] // 2, in_shape[2] // 2)

    def forward(self, params, x):
        y, idx = backend.active().maxpool2x2_forward(x)
        return y, (idx, x.shape[2], x.shape[3])

    def backward(self, params, ctx, dy, grads):
        idx, height, width = ctx
        return backend.active().maxpool2x2_backward(idx, dy, height, width)


def _pool_edges(size: int, bins: int) -> list[tuple[int, int]]:
    if size < bins:
        raise ConfigError(f"cannot average-pool {size} positions into {bins} bins")
    edges = [size * i // bins for i in range(bins + 1)]
    return list(zip(edges[:-1], edges[1:]))


class AdaptiveAvgPool(Layer):
    """Average pooling onto a fixed (out_h, out_w) grid; (1, 1) is global."""

    kind = "adaptive_avgpool"

    def __init__(self, out_h: int = 1, out_w: int = 1):
        self.out_h = out_h
        self.out_w = out_w

    def out_shape(self, in_shape):
        return (in_shape[0], self.out_h, self.out_w)

    def forward(self, params, x):
        batch, channels, height, width = x.shape
        rows = _pool_edges(height, self.out_h)
        cols = _pool_edges(width, self.out_w)
        y = np.empty((batch, channels, self.out_h, self.out_w))
        for i, (r0, r1) in enumerate(rows):
            for j, (c0, c1) in enumerate(cols):
                y[:, :, i, j] = x[:, :, r0:r1, c0:c1].mean(axis=(2, 3))
        return y, (height, width, rows, cols)

    def backward(self, params, ctx, dy, grads):
        height, width, rows, cols = ctx
        batch, channels = dy.shape[:2]
        dx = np.zeros((batch, channels, height, width))
        for i, (r0, r1) in enumerate(rows):
            for j, (c0, c1) in enumerate(cols):
                area = (r1 - r0) * (c1 - c0)
                dx[:, :, r0:r1, c0:c1] += dy[:, :, i, j, None, None] / area
        return dx


class Flatten(Layer):
    kind = "flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, params, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, params, ctx, dy, grads):
        return dy.reshape(ctx)


class Dense(Layer):
    kind = "dense"

    def __init__(self, name: str, in_features: int, out_features: int):
        self.name = name
        self.in_features = in_features
        self.out_features = out_features

    def param_shapes(self, in_shape):
        if in_shape != (self.in_features,):
            raise ConfigError(
                f"layer {self.name}: expected input ({self.in_features},), got {in_shape}"
            )
        return {
            f"{self.name}.w": (self.out_features, self.in_features),
            f"{self.name}.b": (self.out_features,),
        }

    def out_shape(self, in_shape):
        return (self.out_features,)

    def forward(self, params, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ConfigError(
                f"layer {self.name}: expected (B, {self.in_features}), got {x.shape}"
            )
        w = params[f"{self.name}.w"]
        b = params[f"{self.name}.b"]
        return x @ w.T + b, x

    def backward(self, params, ctx, dy, grads):
        x = ctx
        grads[f"{self.name}.w"] = dy.T @ x
        grads[f"{self.name}.b"] = dy.sum(axis=0)
        return dy @ params[f"{self.name}.w"]


class ReLU(Layer):
    kind = "relu"

    def forward(self, params, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, params, ctx, dy, grads):
        return dy * ctx


class Softmax(Layer):
    kind = "softmax"

    def forward(self, params, x):
        shifted = x - x.max(axis=-1, keepdims=True)
        expd = np.exp(shifted)
        p = expd / expd.sum(axis=-1, keepdims=True)
        return p, p

    def backward(self, params, ctx, dy, grads):
        p = ctx
        return p * (dy - (dy * p).sum(axis=-1, keepdims=True))


class Network:
    """An ordered layer stack with explicit parameters.

    ``init_params`` draws uniform(-a, a) weights with
    a = sqrt(6 / (fan_in + fan_out)) per layer and zero biases, in layer
    order, so a seeded generator fully determines the initialization.
    """

    def __init__(self, layers: list[Layer], input_shape: tuple):
        self.layers = layers
        self.input_shape = tuple(input_shape)
        self.shapes = [self.input_shape]
        for i, layer in enumerate(layers):
            shape = layer.out_shape(self.shapes[-1])
            if any(dim < 1 for dim in shape):
                raise ConfigError(
                    f"layer {i} ({layer.kind}) produces an empty shape {shape} "
                    f"from {self.shapes[-1]}; input {self.input_shape} is too small"
                )
            self.shapes.append(shape)
        self.output_shape = self.shapes[-1]

    def count_kind(self, kind: str) -> int:
        return sum(1 for layer in self.layers if layer.kind == kind)

    def init_params(self, rng: np.random.Generator) -> ParamSet:
        params = ParamSet()
        for layer, in_shape in zip(self.layers, self.shapes):
            for name, shape in layer.param_shapes(in_shape).items():
                if name.endswith(".b"):
                    params[name] = np.zeros(shape)
                elif len(shape) == 4:
                    fan_in = shape[1] * shape[2] * shape[3]
                    fan_out = shape[0] * shape[2] * shape[3]
                    bound = np.sqrt(6.0 / (fan_in + fan_out))
                    params[name] = rng.uniform(-bound, bound, size=shape)
                else:
                    bound = np.sqrt(6.0 / (shape[1] + shape[0]))
                    params[name] = rng.uniform(-bound, bound, size=shape)
        return params

    def forward(self, params: ParamSet, x: np.ndarray, upto: int | None = None):
        """Run layers [0, upto); returns (output, cache)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ConfigError(
                f"network expects input {self.input_shape}, got {x.shape[1:]}"
            )
        cache = []
        for layer in self.layers[:upto]:
            x, ctx = layer.forward(params, x)
            cache.append(ctx)
        return x, cache

    def backward(self, params: ParamSet, cache: list, dy: np.ndarray):
        """Full-chain backward; returns (grads, dx)."""
        return self._backward_from(len(self.layers) - 1, params, cache, dy)

    def backward_fused_ce(self, params: ParamSet, cache: list, dlogits: np.ndarray):
        """Backward for softmax-ended networks, starting from the logits
        gradient (probabilities minus one-hot target); skips the softmax
        layer's own Jacobian, which the fused gradient already contains."""
        if not self.layers or self.layers[-1].kind != "softmax":
            raise ConfigError("fused cross-entropy backward needs a softmax tail")
        return self._backward_from(len(self.layers) - 2, params, cache, dlogits)

    def _backward_from(self, start: int, params, cache, dy):
        if len(cache) != len(self.layers):
            raise InputError("forward cache is missing or incomplete")
        grads = ParamSet()
        for i in range(start, -1, -1):
            dy = self.layers[i].backward(params, cache[i], dy, grads)
        return grads, dy
