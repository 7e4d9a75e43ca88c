"""Open-set decision pipeline: classify, compare against the predicted
identity's enrollment, threshold the siamese distance.

Verdict rule: rogue iff threshold < distance; a distance exactly on the
threshold is accepted as legitimate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .datasets import EnrollmentDb
from .dsp import Spectrogram
from .errors import ConfigError, InputError
from .models import PredictionModel, SiameseModel
from .nn import ParamSet

VERDICT_LEGITIMATE = "legitimate"
VERDICT_ROGUE = "rogue"


@dataclass
class Decision:
    """Outcome of one packet: verdict plus the audit intermediates
    (argmax identity, its probability, the siamese distance, the threshold
    in force)."""

    verdict: str
    predicted: int
    distance: float
    threshold: float
    probability: float

    @property
    def is_rogue(self) -> bool:
        return self.verdict == VERDICT_ROGUE


@dataclass(frozen=True)
class ThresholdPolicy:
    """How the decision threshold is chosen: a fixed value, the validation
    equal-error-rate point, or the smallest threshold meeting a false
    positive rate target."""

    method: str
    value: float | None = None

    def __post_init__(self):
        if self.method not in ("fixed", "eer_on_validation", "target_fpr"):
            raise ConfigError(f"unknown threshold method {self.method!r}")
        if self.method == "fixed":
            if self.value is None or not np.isfinite(self.value) or self.value < 0:
                raise ConfigError("fixed threshold needs a finite value >= 0")
        if self.method == "target_fpr":
            if self.value is None or not 0.0 <= self.value <= 1.0:
                raise ConfigError("target_fpr needs a rate in [0, 1]")


def _verdict(distance: float, threshold: float) -> str:
    return VERDICT_ROGUE if threshold < distance else VERDICT_LEGITIMATE


def infer(
    observed: Spectrogram,
    pred_model: PredictionModel,
    pred_params: ParamSet,
    sia_model: SiameseModel,
    sia_params: ParamSet,
    enrollment: EnrollmentDb,
    threshold: float,
) -> Decision:
    """Decide one observed spectrogram."""
    prediction = pred_model.predict(pred_params, observed)
    reference = enrollment.entry(prediction.predicted)
    pair = sia_model.distance(sia_params, reference, observed)
    return Decision(
        verdict=_verdict(pair.distance, threshold),
        predicted=prediction.predicted,
        distance=pair.distance,
        threshold=threshold,
        probability=float(prediction.probabilities[prediction.predicted]),
    )


def infer_batch(
    observations: list[Spectrogram],
    pred_model: PredictionModel,
    pred_params: ParamSet,
    sia_model: SiameseModel,
    sia_params: ParamSet,
    enrollment: EnrollmentDb,
    threshold: float,
    chunk: int = 64,
) -> tuple[list[Decision], float]:
    """Decide a list of spectrograms in order.

    Returns (decisions, wall-clock seconds per 1000 records). Enrolled
    references are embedded once per identity; observed samples are
    processed in chunks. Equivalent to calling ``infer`` per item.
    """
    if not observations:
        return [], 0.0
    for i, obs in enumerate(observations):
        if obs.shape != (pred_model.input_hw[0], pred_model.input_hw[1]):
            raise InputError(
                f"observation {i} has shape {obs.shape}, expected {pred_model.input_hw}"
            )
    started = time.perf_counter()
    class_count = pred_model.class_count
    enrolled_inputs = np.stack(
        [sia_model.to_input(enrollment.entry(i)) for i in range(class_count)]
    )
    enrolled_embeddings = sia_model.embed_batch(sia_params, enrolled_inputs)

    decisions: list[Decision] = []
    for start in range(0, len(observations), chunk):
        batch = observations[start : start + chunk]
        images = np.stack([b.values for b in batch]).astype(np.float64)[:, None]
        probs, _ = pred_model.net.forward(pred_params, images)
        predicted = np.argmax(probs, axis=1)
        embeddings = sia_model.embed_batch(
            sia_params, np.stack([sia_model.to_input(b) for b in batch])
        )
        diffs = embeddings - enrolled_embeddings[predicted]
        distances = np.sqrt((diffs**2).sum(axis=1))
        for k in range(len(batch)):
            decisions.append(
                Decision(
                    verdict=_verdict(float(distances[k]), threshold),
                    predicted=int(predicted[k]),
                    distance=float(distances[k]),
                    threshold=threshold,
                    probability=float(probs[k, predicted[k]]),
                )
            )
    elapsed = time.perf_counter() - started
    return decisions, elapsed * 1000.0 / len(observations)


def _rates(
    legit: np.ndarray, rogue: np.ndarray, threshold: float
) -> tuple[float, float]:
    """(false positive rate, false negative rate) at a threshold: FPR is
    the legitimate fraction flagged rogue, FNR the rogue fraction accepted."""
    fpr = float(np.mean(legit > threshold))
    fnr = float(np.mean(rogue <= threshold))
    return fpr, fnr


def calibrate_threshold(
    scores_legit: list[float],
    scores_rogue: list[float],
    policy: ThresholdPolicy,
) -> float:
    """Resolve the decision threshold per the policy.

    ``eer_on_validation`` scans the candidate grid of observed scores for
    the point where FPR and FNR are closest; when a run of candidates ties
    (e.g. perfectly separated scores), the midpoint of the tied interval is
    returned. ``target_fpr`` returns the smallest threshold whose FPR does
    not exceed the target rate.
    """
    if policy.method == "fixed":
        return float(policy.value)
    legit = np.asarray(scores_legit, dtype=np.float64)
    rogue = np.asarray(scores_rogue, dtype=np.float64)
    if legit.size == 0 or rogue.size == 0:
        raise InputError("threshold calibration needs both legitimate and rogue scores")

    if policy.method == "target_fpr":
        candidates = np.concatenate(([0.0], np.unique(legit)))
        for candidate in candidates:
            fpr, _ = _rates(legit, rogue, candidate)
            if fpr <= policy.value:
                return float(max(candidate, 0.0))
        return float(candidates[-1])

    grid = np.unique(np.concatenate((legit, rogue)))
    gaps = np.array([abs(np.subtract(*_rates(legit, rogue, g))) for g in grid])
    best = gaps.min()
    tied = np.flatnonzero(gaps == best)
    first, last = tied[0], tied[-1]
    upper = grid[last + 1] if last + 1 < grid.size else grid[last]
    return float(max((grid[first] + upper) / 2.0, 0.0))
