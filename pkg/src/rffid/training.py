"""Training loops for the prediction and siamese networks.

The joint loop interleaves, per batch, one cross-entropy update of the
prediction parameters and one contrastive update of the siamese
parameters. Siamese pairs are built against the enrollment database: the
paired identity is the prediction argmax or, with ``random_branch_prob``
(0.5 by default), a uniformly random identity, which manufactures
dissimilar pairs without ever seeing a rogue device. The pair label is 0
when the paired identity equals the true identity and 1 otherwise.

Every stochastic choice draws from a stream derived from the optimizer
seed: "init:prediction", "init:siamese", "shuffle", "pairing". The
prediction update path never reads the siamese state or the pairing
stream, so its trajectory is bit-identical with or without the siamese
branch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .datasets import DatasetSplit, EnrollmentDb, enroll
from .errors import ConfigError, InputError, TrainingDivergedError
from .models import Prediction, PredictionModel, SiameseModel
from .nn import OptimizerConfig, ParamSet, contrastive_loss, cross_entropy, sgd_step
from .seeding import derive_rng


@dataclass(frozen=True)
class PairingConfig:
    """Siamese pair construction: probability of the random-identity branch
    and the contrastive margin."""

    random_branch_prob: float = 0.5
    margin: float = 1.0
    hinge: str = "squared_distance"

    def __post_init__(self):
        if not 0.0 <= self.random_branch_prob <= 1.0:
            raise ConfigError(
                f"random_branch_prob must be in [0, 1], got {self.random_branch_prob}"
            )
        if self.margin <= 0:
            raise ConfigError(f"margin must be positive, got {self.margin}")
        if self.hinge not in ("squared_distance", "distance"):
            raise ConfigError(f"unknown hinge variant {self.hinge!r}")


@dataclass
class TrainReport:
    """Loss curves and the trained parameter sets of one run."""

    ce_curve: list[float] = field(default_factory=list)
    con_curve: list[float] = field(default_factory=list)
    epochs_run: int = 0
    seed: int = 0
    wall_time_s: float = 0.0
    prediction_params: ParamSet | None = None
    siamese_params: ParamSet | None = None


def sample_pair_identity(
    prediction: Prediction,
    class_count: int,
    config: PairingConfig,
    rng: np.random.Generator,
) -> int:
    """Identity to pair against: the argmax, or (with the configured
    probability) a uniform draw over all identities, which may coincide
    with the argmax."""
    if class_count < 1:
        raise ConfigError("class_count must be >= 1")
    if rng.random() < config.random_branch_prob:
        return int(rng.integers(class_count))
    return prediction.predicted


def legitimacy_label(identity: int, paired_identity: int) -> int:
    """0 for a matched (similar) pair, 1 for a mismatched one."""
    return 0 if identity == paired_identity else 1


def _one_hot(labels: np.ndarray, class_count: int) -> np.ndarray:
    out = np.zeros((labels.size, class_count))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, order.size, batch_size):
        yield order[start : start + batch_size]


def _check_finite(loss: float, epoch: int, learning_rate: float) -> None:
    if not np.isfinite(loss):
        raise TrainingDivergedError(epoch, learning_rate)


class _EarlyStop:
    """Stop after `patience` consecutive epochs whose mean loss improves on
    the best seen so far by less than `min_delta`."""

    def __init__(self, patience: int, min_delta: float):
        self.patience = patience
        self.min_delta = min_delta
        self.best = np.inf
        self.streak = 0

    def update(self, loss: float) -> bool:
        if self.best - loss < self.min_delta:
            self.streak += 1
        else:
            self.streak = 0
        self.best = min(self.best, loss)
        return self.patience > 0 and self.streak >= self.patience


def _split_arrays(train: DatasetSplit) -> tuple[np.ndarray, np.ndarray]:
    if not train.items:
        raise InputError("training split is empty")
    images = train.stacked().astype(np.float64)[:, None, :, :]
    labels = train.labels()
    return images, labels


def _enrolled_stack(enrollment: EnrollmentDb, class_count: int, to_input) -> np.ndarray:
    refs = []
    for identity in range(class_count):
        refs.append(to_input(enrollment.entry(identity)))
    return np.stack(refs)


def train_prediction(
    train: DatasetSplit, model: PredictionModel, opt: OptimizerConfig
) -> tuple[ParamSet, list[float]]:
    """Cross-entropy SGD over the training split; returns the trained
    parameters and the per-epoch mean loss curve."""
    images, labels = _split_arrays(train)
    targets = _one_hot(labels, model.class_count)
    params = model.init_params(derive_rng(opt.seed, "init:prediction"))
    shuffle_rng = derive_rng(opt.seed, "shuffle")
    stopper = _EarlyStop(opt.early_stop_patience, opt.early_stop_min_delta)
    curve: list[float] = []
    for epoch in range(opt.epochs):
        order = shuffle_rng.permutation(images.shape[0])
        total = 0.0
        for batch in _batches(order, opt.batch_size):
            probs, cache = model.net.forward(params, images[batch])
            loss, dlogits = cross_entropy(probs, targets[batch])
            _check_finite(loss, epoch, opt.learning_rate)
            grads, _ = model.net.backward_fused_ce(params, cache, dlogits)
            sgd_step(params, grads, opt.learning_rate)
            total += loss * batch.size
        curve.append(total / images.shape[0])
        if stopper.update(curve[-1]):
            break
    return params, curve


def train_siamese_core(
    sia_model: SiameseModel,
    pairing: PairingConfig,
    opt: OptimizerConfig,
    observed: np.ndarray,
    labels: np.ndarray,
    enrolled: np.ndarray,
    probs: np.ndarray,
) -> tuple[ParamSet, list[float]]:
    """Contrastive SGD against fixed prediction probabilities.

    ``observed``: (n, *input_shape) siamese inputs; ``enrolled``:
    (I, *input_shape) per-identity references; ``probs``: (n, I) output of
    the frozen prediction network, consumed by the pairing rule.
    """
    class_count = enrolled.shape[0]
    params = sia_model.init_params(derive_rng(opt.seed, "init:siamese"))
    shuffle_rng = derive_rng(opt.seed, "shuffle")
    pairing_rng = derive_rng(opt.seed, "pairing")
    stopper = _EarlyStop(opt.early_stop_patience, opt.early_stop_min_delta)
    argmax = np.argmax(probs, axis=1)
    curve: list[float] = []
    for epoch in range(opt.epochs):
        order = shuffle_rng.permutation(observed.shape[0])
        total = 0.0
        for batch in _batches(order, opt.batch_size):
            paired = np.array(
                [
                    sample_pair_identity(
                        Prediction(probs[i], int(argmax[i])),
                        class_count,
                        pairing,
                        pairing_rng,
                    )
                    for i in batch
                ]
            )
            pair_labels = (labels[batch] != paired).astype(np.float64)
            loss = _siamese_update(
                sia_model, params, enrolled[paired], observed[batch],
                pair_labels, pairing, opt.learning_rate,
            )
            _check_finite(loss, epoch, opt.learning_rate)
            total += loss * batch.size
        curve.append(total / observed.shape[0])
        if stopper.update(curve[-1]):
            break
    return params, curve


def _siamese_update(
    sia_model: SiameseModel,
    params: ParamSet,
    enrolled_batch: np.ndarray,
    observed_batch: np.ndarray,
    pair_labels: np.ndarray,
    pairing: PairingConfig,
    learning_rate: float,
) -> float:
    v1, cache1 = sia_model.net.forward(params, enrolled_batch)
    v2, cache2 = sia_model.net.forward(params, observed_batch)
    loss, dv1, dv2, _ = contrastive_loss(
        v1, v2, pair_labels, pairing.margin, pairing.hinge
    )
    grads1, _ = sia_model.net.backward(params, cache1, dv1)
    grads2, _ = sia_model.net.backward(params, cache2, dv2)
    combined = ParamSet({name: grads1[name] + grads2[name] for name in grads1})
    sgd_step(params, combined, learning_rate)
    return loss


def train_siamese(
    train: DatasetSplit,
    enrollment: EnrollmentDb,
    pred_model: PredictionModel,
    pred_params: ParamSet,
    sia_model: SiameseModel,
    pairing: PairingConfig,
    opt: OptimizerConfig,
) -> tuple[ParamSet, list[float]]:
    """Train the siamese network against a frozen prediction network."""
    images, labels = _split_arrays(train)
    for identity in range(train.identity_count):
        enrollment.entry(identity)
    probs = _predict_all(pred_model, pred_params, images, opt.batch_size)
    enrolled = _enrolled_stack(enrollment, train.identity_count, sia_model.to_input)
    return train_siamese_core(
        sia_model, pairing, opt, images, labels, enrolled, probs
    )


def _predict_all(
    pred_model: PredictionModel,
    pred_params: ParamSet,
    images: np.ndarray,
    batch_size: int,
) -> np.ndarray:
    chunks = []
    step = max(batch_size, 16)
    for start in range(0, images.shape[0], step):
        probs, _ = pred_model.net.forward(pred_params, images[start : start + step])
        chunks.append(probs)
    return np.concatenate(chunks)


def train_joint(
    train: DatasetSplit,
    pred_model: PredictionModel,
    sia_model: SiameseModel,
    pairing: PairingConfig,
    opt: OptimizerConfig,
    enrollment: EnrollmentDb | None = None,
) -> TrainReport:
    """Interleaved training: per batch, one prediction update followed by
    one siamese update that pairs with the pre-update probabilities.

    The prediction path consumes exactly the same random streams as
    ``train_prediction``, so its parameter trajectory is identical whether
    or not the siamese branch runs.
    """
    started = time.perf_counter()
    images, labels = _split_arrays(train)
    targets = _one_hot(labels, pred_model.class_count)
    if enrollment is None:
        enrollment = enroll(train)
    enrolled = _enrolled_stack(enrollment, train.identity_count, sia_model.to_input)

    pred_params = pred_model.init_params(derive_rng(opt.seed, "init:prediction"))
    sia_params = sia_model.init_params(derive_rng(opt.seed, "init:siamese"))
    shuffle_rng = derive_rng(opt.seed, "shuffle")
    pairing_rng = derive_rng(opt.seed, "pairing")
    stopper = _EarlyStop(opt.early_stop_patience, opt.early_stop_min_delta)

    report = TrainReport(seed=opt.seed)
    for epoch in range(opt.epochs):
        order = shuffle_rng.permutation(images.shape[0])
        ce_total = 0.0
        con_total = 0.0
        for batch in _batches(order, opt.batch_size):
            probs, cache = pred_model.net.forward(pred_params, images[batch])
            ce, dlogits = cross_entropy(probs, targets[batch])
            _check_finite(ce, epoch, opt.learning_rate)
            grads, _ = pred_model.net.backward_fused_ce(pred_params, cache, dlogits)
            sgd_step(pred_params, grads, opt.learning_rate)
            ce_total += ce * batch.size

            argmax = np.argmax(probs, axis=1)
            paired = np.array(
                [
                    sample_pair_identity(
                        Prediction(probs[k], int(argmax[k])),
                        pred_model.class_count,
                        pairing,
                        pairing_rng,
                    )
                    for k in range(batch.size)
                ]
            )
            pair_labels = (labels[batch] != paired).astype(np.float64)
            con = _siamese_update(
                sia_model, sia_params, enrolled[paired], images[batch],
                pair_labels, pairing, opt.learning_rate,
            )
            _check_finite(con, epoch, opt.learning_rate)
            con_total += con * batch.size

        report.ce_curve.append(ce_total / images.shape[0])
        report.con_curve.append(con_total / images.shape[0])
        report.epochs_run = epoch + 1
        if stopper.update(report.ce_curve[-1] + report.con_curve[-1]):
            break

    report.prediction_params = pred_params
    report.siamese_params = sia_params
    report.wall_time_s = time.perf_counter() - started
    return report
