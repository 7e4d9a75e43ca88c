"""The two network architectures: an identity prediction network
(convolutional backbone, dense head, softmax) and a weight-tied siamese
embedding network compared with Euclidean distance.

Presets:

* ``small`` -- four 3x3 conv stages (8, 16, 32, 32 channels) with 2x2 max
  pooling, global average pooling, and a 64-wide dense head. Trains on a
  laptop CPU in minutes; the default everywhere.
* ``vgg11`` -- the full-size backbone: eight 3x3 conv layers
  (64..512 channels) with five 2x2 max pools, average-pooled onto a fixed
  grid so the backbone always emits a 512x3 fingerprint, then two dense
  layers. Kept for architecture fidelity and shape audits.

The siamese network has four 3x3 conv layers and three dense layers ending
in a 32-dimensional embedding; both branches share one ParamSet, so weight
tying is structural. A dense-only variant embeds backbone fingerprints
instead of spectrograms (the comparison baseline used in evaluation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import Spectrogram
from .errors import ConfigError
from .nn import (
    AdaptiveAvgPool,
    Conv3x3,
    Dense,
    Flatten,
    InputStandardize,
    MaxPool2x2,
    Network,
    ParamSet,
    ReLU,
    Softmax,
)

PREDICTION_PRESETS = ("small", "vgg11")
DEFAULT_EMBEDDING_DIM = 32


@dataclass
class Prediction:
    """Class probabilities and the argmax identity (ties break to the
    lowest index)."""

    probabilities: np.ndarray
    predicted: int


@dataclass
class EmbeddingPair:
    """Embeddings of an enrolled reference and an observed sample, plus
    their Euclidean distance."""

    enrolled: np.ndarray
    observed: np.ndarray
    distance: float


def _to_image_batch(values: np.ndarray, input_shape: tuple) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape == input_shape:
        arr = arr[None]
    elif arr.shape[1:] != input_shape:
        raise ConfigError(f"expected input shape {input_shape}, got {arr.shape}")
    return arr


class PredictionModel:
    """Identity classifier: backbone fingerprint extractor + dense head."""

    def __init__(self, preset: str, class_count: int, input_hw: tuple[int, int]):
        if preset not in PREDICTION_PRESETS:
            raise ConfigError(f"unknown prediction preset {preset!r}")
        if class_count < 1:
            raise ConfigError(f"class_count must be >= 1, got {class_count}")
        self.preset = preset
        self.class_count = class_count
        self.input_hw = tuple(input_hw)
        self.input_shape = (1,) + self.input_hw

        if preset == "small":
            channels = [8, 16, 32, 32]
            layers = [InputStandardize()]
            cin = 1
            for i, cout in enumerate(channels, start=1):
                layers += [Conv3x3(f"conv{i}", cin, cout), ReLU(), MaxPool2x2()]
                cin = cout
            layers += [AdaptiveAvgPool(1, 1), Flatten()]
            self.fingerprint_shape = (channels[-1],)
            backbone_out = channels[-1]
            head = [Dense("fc1", backbone_out, 64), ReLU(), Dense("fc2", 64, class_count)]
        else:
            plan = [(64, True), (128, True), (256, False), (256, True),
                    (512, False), (512, True), (512, False), (512, True)]
            layers = [InputStandardize()]
            cin = 1
            for i, (cout, pool) in enumerate(plan, start=1):
                layers += [Conv3x3(f"conv{i}", cin, cout), ReLU()]
                if pool:
                    layers.append(MaxPool2x2())
                cin = cout
            layers += [AdaptiveAvgPool(1, 3), Flatten()]
            self.fingerprint_shape = (512, 3)
            backbone_out = 512 * 3
            head = [Dense("fc1", backbone_out, 256), ReLU(),
                    Dense("fc2", 256, class_count)]

        self.backbone_end = len(layers)
        layers = layers + head + [Softmax()]
        self.net = Network(layers, self.input_shape)

    def init_params(self, rng: np.random.Generator) -> ParamSet:
        return self.net.init_params(rng)

    def predict_batch(self, params: ParamSet, images: np.ndarray) -> np.ndarray:
        """(B, H, W) or (B, 1, H, W) images -> (B, I) probabilities."""
        if images.ndim == 3:
            images = images[:, None, :, :]
        probs, _ = self.net.forward(params, images)
        return probs

    def predict(self, params: ParamSet, spectrogram: Spectrogram) -> Prediction:
        batch = _to_image_batch(spectrogram.values, self.input_hw)[:, None]
        probs, _ = self.net.forward(params, batch)
        return Prediction(probabilities=probs[0], predicted=int(np.argmax(probs[0])))

    def fingerprint(self, params: ParamSet, spectrogram: Spectrogram) -> np.ndarray:
        """Backbone output before the dense head."""
        batch = _to_image_batch(spectrogram.values, self.input_hw)[:, None]
        feat, _ = self.net.forward(params, batch, upto=self.backbone_end)
        return feat[0].reshape(self.fingerprint_shape)

    def fingerprint_batch(self, params: ParamSet, images: np.ndarray) -> np.ndarray:
        if images.ndim == 3:
            images = images[:, None, :, :]
        feat, _ = self.net.forward(params, images, upto=self.backbone_end)
        return feat.reshape((feat.shape[0],) + self.fingerprint_shape)


class SiameseModel:
    """Weight-tied twin embedding network.

    ``input_kind`` is "spectrogram" (conv stack + dense tail) or "vector"
    (dense tail only, used when embedding backbone fingerprints)."""

    def __init__(
        self,
        input_shape: tuple,
        embedding_dim: int = DEFAULT_EMBEDDING_DIM,
        input_kind: str = "spectrogram",
    ):
        if embedding_dim < 1:
            raise ConfigError(f"embedding_dim must be >= 1, got {embedding_dim}")
        self.embedding_dim = embedding_dim
        self.input_kind = input_kind
        if input_kind == "spectrogram":
            if len(input_shape) != 2:
                raise ConfigError(f"expected (H, W) input, got {input_shape}")
            self.input_hw = tuple(input_shape)
            self.input_shape = (1,) + self.input_hw
            channels = [8, 16, 16, 32]
            layers = [InputStandardize()]
            cin = 1
            for i, cout in enumerate(channels, start=1):
                layers += [Conv3x3(f"conv{i}", cin, cout), ReLU(), MaxPool2x2()]
                cin = cout
            layers += [AdaptiveAvgPool(1, 1), Flatten()]
            dense_in = channels[-1]
        elif input_kind == "vector":
            dense_in = int(np.prod(input_shape))
            self.input_shape = (dense_in,)
            self.input_hw = None
            layers = [InputStandardize()]
        else:
            raise ConfigError(f"unknown siamese input kind {input_kind!r}")
        layers += [
            Dense("fc1", dense_in, 64), ReLU(),
            Dense("fc2", 64, 48), ReLU(),
            Dense("fc3", 48, embedding_dim),
        ]
        self.net = Network(layers, self.input_shape)

    def init_params(self, rng: np.random.Generator) -> ParamSet:
        return self.net.init_params(rng)

    def to_input(self, value) -> np.ndarray:
        if isinstance(value, Spectrogram):
            value = value.values
        arr = np.asarray(value, dtype=np.float64)
        if self.input_kind == "spectrogram":
            if arr.shape != self.input_hw:
                raise ConfigError(
                    f"expected spectrogram of shape {self.input_hw}, got {arr.shape}"
                )
            return arr[None]
        return arr.reshape(self.input_shape)

    def embed_batch(self, params: ParamSet, inputs: np.ndarray) -> np.ndarray:
        """(B, *input_shape) -> (B, embedding_dim)."""
        out, _ = self.net.forward(params, inputs)
        return out

    def embed(self, params: ParamSet, value) -> np.ndarray:
        return self.embed_batch(params, self.to_input(value)[None])[0]

    def distance(self, params: ParamSet, enrolled, observed) -> EmbeddingPair:
        pair = np.stack([self.to_input(enrolled), self.to_input(observed)])
        embeddings = self.embed_batch(params, pair)
        dist = float(np.linalg.norm(embeddings[0] - embeddings[1]))
        return EmbeddingPair(
            enrolled=embeddings[0], observed=embeddings[1], distance=dist
        )


def checkpoint_metadata(model) -> dict[str, str]:
    """Architecture descriptor stored in checkpoints so evaluation can
    rebuild the exact model."""
    if isinstance(model, PredictionModel):
        return {
            "kind": "prediction",
            "preset": model.preset,
            "classes": str(model.class_count),
            "input_hw": f"{model.input_hw[0]}x{model.input_hw[1]}",
        }
    if isinstance(model, SiameseModel):
        meta = {
            "kind": "siamese",
            "input_kind": model.input_kind,
            "embedding_dim": str(model.embedding_dim),
        }
        if model.input_kind == "spectrogram":
            meta["input_hw"] = f"{model.input_hw[0]}x{model.input_hw[1]}"
        else:
            meta["input_dim"] = str(model.input_shape[0])
        return meta
    raise ConfigError(f"unknown model type {type(model).__name__}")


def model_from_metadata(meta: dict[str, str]):
    kind = meta.get("kind")
    if kind == "prediction":
        h, w = meta["input_hw"].split("x")
        return PredictionModel(meta["preset"], int(meta["classes"]), (int(h), int(w)))
    if kind == "siamese":
        if meta["input_kind"] == "spectrogram":
            h, w = meta["input_hw"].split("x")
            return SiameseModel((int(h), int(w)), int(meta["embedding_dim"]))
        return SiameseModel(
            (int(meta["input_dim"]),), int(meta["embedding_dim"]), input_kind="vector"
        )
    raise ConfigError(f"checkpoint metadata has unknown kind {kind!r}")
