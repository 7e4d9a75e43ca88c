"""Metrics: closed-set accuracy/confusion, rogue-detection ROC/AUC/EER,
precision/recall/F1, SNR sweeps, and the fingerprint-input siamese
baseline.

Rogue is the positive class throughout, and larger siamese distances are
more positive, matching the decision rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import ROGUE_LABEL, DatasetSplit, Scenario, build_synthetic_dataset
from .errors import InputError
from .inference import Decision, infer_batch
from .models import PredictionModel, SiameseModel
from .nn import OptimizerConfig, ParamSet
from .training import PairingConfig, train_siamese_core

_trapezoid = getattr(np, "trapezoid", None) or np.trapz  # numpy < 2 compat


@dataclass
class ConfusionMatrix:
    """Integer counts; rows are true identities, columns predictions."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise InputError(f"confusion matrix must be square, got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise InputError("confusion matrix entries must be nonnegative")

    @property
    def accuracy(self) -> float:
        total = self.counts.sum()
        if total == 0:
            raise InputError("confusion matrix is empty")
        return float(np.trace(self.counts) / total)


@dataclass
class RocCurve:
    """Threshold sweep of (FPR, TPR) from (0, 0) to (1, 1), with the
    trapezoidal AUC and the interpolated equal error rate."""

    thresholds: np.ndarray
    points: np.ndarray  # (n, 2) columns fpr, tpr
    auc: float
    eer: float


def closed_set_accuracy(
    true_labels: np.ndarray, predicted_labels: np.ndarray, class_count: int
) -> tuple[float, ConfusionMatrix]:
    """Accuracy and confusion matrix on a legitimate-only test set."""
    truth = np.asarray(true_labels, dtype=np.int64)
    pred = np.asarray(predicted_labels, dtype=np.int64)
    if truth.size == 0:
        raise InputError("closed-set accuracy needs at least one sample")
    if truth.shape != pred.shape:
        raise InputError("label arrays must have equal length")
    if np.any(truth == ROGUE_LABEL):
        raise InputError("closed-set accuracy is defined on legitimate samples only")
    counts = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(counts, (truth, pred), 1)
    matrix = ConfusionMatrix(counts)
    return matrix.accuracy, matrix


def roc_curve(scores: list[tuple[float, bool]]) -> RocCurve:
    """ROC over (distance, is_rogue) pairs.

    Thresholds sweep from +inf down through every distinct score to -inf;
    at each threshold TPR is the rogue fraction above it and FPR the
    legitimate fraction above it. AUC by the trapezoidal rule (equals the
    pairwise Mann-Whitney statistic with ties counted half). EER by linear
    interpolation where FPR crosses 1 - TPR.
    """
    rogue = np.array([s for s, flag in scores if flag], dtype=np.float64)
    legit = np.array([s for s, flag in scores if not flag], dtype=np.float64)
    if rogue.size == 0 or legit.size == 0:
        raise InputError("ROC needs at least one rogue and one legitimate score")
    values = np.unique(np.concatenate((rogue, legit)))
    thresholds = np.concatenate(([np.inf], values[::-1], [-np.inf]))
    fpr = np.array([np.mean(legit > t) for t in thresholds])
    tpr = np.array([np.mean(rogue > t) for t in thresholds])
    auc = float(_trapezoid(tpr, fpr))

    fnr = 1.0 - tpr
    diff = fpr - fnr  # runs from -1 (strict thresholds) to +1 (accept-none)
    eer = None
    for i in range(diff.size - 1):
        if diff[i] == 0.0:
            eer = float(fpr[i])
            break
        if diff[i] < 0.0 <= diff[i + 1]:
            denom = (fpr[i + 1] - fpr[i]) - (fnr[i + 1] - fnr[i])
            frac = (fnr[i] - fpr[i]) / denom if denom != 0.0 else 0.0
            eer = float(fpr[i] + frac * (fpr[i + 1] - fpr[i]))
            break
    if eer is None:
        eer = float(fpr[-1])
    return RocCurve(
        thresholds=thresholds,
        points=np.column_stack((fpr, tpr)),
        auc=auc,
        eer=eer,
    )


def decision_scores(
    decisions: list[Decision], labels: np.ndarray
) -> list[tuple[float, bool]]:
    return [
        (d.distance, int(label) == ROGUE_LABEL)
        for d, label in zip(decisions, labels)
    ]


def detection_metrics(
    decisions: list[Decision], is_rogue_truth: np.ndarray
) -> dict[str, float | None]:
    """Binary rogue-detection metrics. Metrics with an empty denominator
    are reported as None rather than zero."""
    truth = np.asarray(is_rogue_truth, dtype=bool)
    if len(decisions) != truth.size:
        raise InputError("decision list and truth array must have equal length")
    if truth.size == 0:
        raise InputError("detection metrics need at least one sample")
    predicted = np.array([d.is_rogue for d in decisions], dtype=bool)
    tp = int(np.sum(predicted & truth))
    fp = int(np.sum(predicted & ~truth))
    fn = int(np.sum(~predicted & truth))
    tn = int(np.sum(~predicted & ~truth))
    accuracy = (tp + tn) / truth.size
    precision = tp / (tp + fp) if (tp + fp) > 0 else None
    recall = tp / (tp + fn) if (tp + fn) > 0 else None
    f1 = None
    if precision is not None and recall is not None and (precision + recall) > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    return {
        "accuracy": accuracy,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "true_positives": tp,
        "false_positives": fp,
        "false_negatives": fn,
        "true_negatives": tn,
    }


def evaluate_split(
    split: DatasetSplit,
    pred_model: PredictionModel,
    pred_params: ParamSet,
    sia_model: SiameseModel,
    sia_params: ParamSet,
    enrollment,
    threshold: float,
) -> dict:
    """Run inference over a labeled split and aggregate every metric."""
    observations = [item.spectrogram for item in split.items]
    labels = split.labels()
    decisions, time_per_1000 = infer_batch(
        observations, pred_model, pred_params, sia_model, sia_params,
        enrollment, threshold,
    )
    legit_mask = labels != ROGUE_LABEL
    predicted = np.array([d.predicted for d in decisions])
    result: dict = {
        "decisions": decisions,
        "labels": labels,
        "time_per_1000_s": time_per_1000,
        "threshold": threshold,
    }
    if legit_mask.any():
        accuracy, confusion = closed_set_accuracy(
            labels[legit_mask], predicted[legit_mask], split.identity_count
        )
        result["closed_set_accuracy"] = accuracy
        result["confusion"] = confusion
    if legit_mask.any() and (~legit_mask).any():
        curve = roc_curve(decision_scores(decisions, labels))
        result["roc"] = curve
        result["auc"] = curve.auc
        result["eer"] = curve.eer
        rogue_decisions = [d for d, m in zip(decisions, legit_mask) if not m]
        result["rogue_detection_rate"] = float(
            np.mean([d.is_rogue for d in rogue_decisions])
        )
        result["detection"] = detection_metrics(decisions, ~legit_mask)
    return result


def snr_sweep(
    scenario: Scenario,
    snr_list: list[float | None],
    pred_model: PredictionModel,
    pred_params: ParamSet,
    sia_model: SiameseModel,
    sia_params: ParamSet,
    enrollment,
    threshold: float,
    seed: int,
) -> list[dict]:
    """Regenerate the test split at each SNR (training artifacts untouched)
    and evaluate. A None entry means noiseless."""
    rows = []
    for snr in snr_list:
        split = build_synthetic_dataset(scenario, "test", seed, snr_db_override=snr)
        outcome = evaluate_split(
            split, pred_model, pred_params, sia_model, sia_params,
            enrollment, threshold,
        )
        rows.append(
            {
                "snr_db": snr,
                "closed_set_accuracy": outcome.get("closed_set_accuracy"),
                "rogue_detection_rate": outcome.get("rogue_detection_rate"),
                "auc": outcome.get("auc"),
                "eer": outcome.get("eer"),
            }
        )
    return rows


def fingerprint_enrollment(
    pred_model: PredictionModel,
    pred_params: ParamSet,
    train: DatasetSplit,
) -> dict[int, np.ndarray]:
    """Per-identity mean backbone fingerprint, the vector-space analogue of
    spectrogram enrollment."""
    images = train.stacked().astype(np.float64)
    labels = train.labels()
    fingerprints = _fingerprints_chunked(pred_model, pred_params, images)
    refs: dict[int, np.ndarray] = {}
    for identity in range(train.identity_count):
        mask = labels == identity
        if not mask.any():
            raise InputError(f"identity {identity} has no training samples")
        refs[identity] = fingerprints[mask].mean(axis=0)
    return refs


def _fingerprints_chunked(pred_model, pred_params, images, chunk: int = 64):
    parts = []
    for start in range(0, images.shape[0], chunk):
        parts.append(
            pred_model.fingerprint_batch(pred_params, images[start : start + chunk])
        )
    return np.concatenate(parts)


def fingerprint_siamese_roc(
    train: DatasetSplit,
    test: DatasetSplit,
    pred_model: PredictionModel,
    pred_params: ParamSet,
    pairing: PairingConfig,
    opt: OptimizerConfig,
    embedding_dim: int = 32,
) -> tuple[RocCurve, SiameseModel, ParamSet]:
    """The comparison baseline: a dense siamese network trained on backbone
    fingerprints instead of spectrograms, scored on the test split."""
    train_images = train.stacked().astype(np.float64)
    train_labels = train.labels()
    train_fps = _fingerprints_chunked(pred_model, pred_params, train_images)
    refs = fingerprint_enrollment(pred_model, pred_params, train)
    enrolled = np.stack([refs[i].reshape(-1) for i in range(train.identity_count)])

    sia_model = SiameseModel(
        (train_fps.shape[-1] if train_fps.ndim == 2 else int(np.prod(train_fps.shape[1:])),),
        embedding_dim,
        input_kind="vector",
    )
    flat_fps = train_fps.reshape(train_fps.shape[0], -1)
    probs = _probs_chunked(pred_model, pred_params, train_images)
    sia_params, _ = train_siamese_core(
        sia_model, pairing, opt, flat_fps, train_labels, enrolled, probs
    )

    test_images = test.stacked().astype(np.float64)
    test_labels = test.labels()
    test_fps = _fingerprints_chunked(pred_model, pred_params, test_images).reshape(
        test_images.shape[0], -1
    )
    test_probs = _probs_chunked(pred_model, pred_params, test_images)
    predicted = np.argmax(test_probs, axis=1)
    ref_embeddings = sia_model.embed_batch(sia_params, enrolled)
    obs_embeddings = sia_model.embed_batch(sia_params, test_fps)
    diffs = obs_embeddings - ref_embeddings[predicted]
    distances = np.sqrt((diffs**2).sum(axis=1))
    scores = [
        (float(d), int(label) == ROGUE_LABEL)
        for d, label in zip(distances, test_labels)
    ]
    return roc_curve(scores), sia_model, sia_params


def _probs_chunked(pred_model, pred_params, images, chunk: int = 64):
    parts = []
    for start in range(0, images.shape[0], chunk):
        probs, _ = pred_model.net.forward(
            pred_params, images[start : start + chunk][:, None]
        )
        parts.append(probs)
    return np.concatenate(parts)
