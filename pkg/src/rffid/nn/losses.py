"""Training losses: cross-entropy over softmax outputs and the siamese
contrastive loss.

Cross-entropy is fused with the softmax for the backward pass: the returned
gradient is with respect to the logits (probabilities minus target), which
is what ``Network.backward_fused_ce`` consumes. Batched inputs return the
batch-mean loss and gradients scaled accordingly.
"""

from __future__ import annotations

import numpy as np

from ..errors import InputError

_PROB_TOL = 1e-6


def cross_entropy(
    predicted: np.ndarray, target: np.ndarray
) -> tuple[float, np.ndarray]:
    """Loss -sum(target * log(predicted)) and the fused logits gradient.

    ``predicted`` must be softmax output (rows summing to 1, entries in
    (0, 1]); ``target`` the matching one-hot rows. 1-D inputs are treated
    as a single sample; 2-D as a batch averaged over rows.
    """
    p = np.atleast_2d(np.asarray(predicted, dtype=np.float64))
    t = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if p.shape != t.shape:
        raise InputError(f"prediction shape {p.shape} != target shape {t.shape}")
    sums = p.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > _PROB_TOL):
        raise InputError(f"predicted rows must sum to 1 within {_PROB_TOL}")
    if np.any(p < 0.0) or np.any(p > 1.0 + _PROB_TOL):
        raise InputError("predicted entries must lie in [0, 1]")
    batch = p.shape[0]
    # contributions only where the target is nonzero; log clamped so an
    # underflowed probability yields a large finite loss, not -inf * 0 = nan
    logp = np.log(np.maximum(p, np.finfo(np.float64).tiny))
    loss = float(-np.where(t > 0.0, t * logp, 0.0).sum() / batch)
    grad = (p - t) / batch
    if np.asarray(predicted).ndim == 1:
        grad = grad[0]
    return loss, grad


def contrastive_loss(
    v1: np.ndarray,
    v2: np.ndarray,
    label: np.ndarray | int,
    margin: float,
    hinge: str = "squared_distance",
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Contrastive loss over one embedding pair or a batch of pairs.

    Per pair with distance D = ||v1 - v2||:

        label 0 (similar):    D**2
        label 1 (dissimilar): max(0, margin - D**2)       (squared_distance)
                              max(0, margin - D)**2       (distance)

    The "squared_distance" hinge keeps the margin on the squared distance;
    "distance" is the conventional alternative, selectable via config.
    Returns (mean loss, dL/dv1, dL/dv2, per-pair distances).
    """
    a1 = np.atleast_2d(np.asarray(v1, dtype=np.float64))
    a2 = np.atleast_2d(np.asarray(v2, dtype=np.float64))
    if a1.shape != a2.shape:
        raise InputError(f"embedding shapes differ: {a1.shape} vs {a2.shape}")
    labels = np.atleast_1d(np.asarray(label, dtype=np.float64))
    if labels.shape[0] != a1.shape[0]:
        raise InputError("one legitimacy label is required per pair")
    if not np.all((labels == 0) | (labels == 1)):
        raise InputError("legitimacy labels must be 0 or 1")
    if margin <= 0:
        raise InputError(f"margin must be positive, got {margin}")
    if hinge not in ("squared_distance", "distance"):
        raise InputError(f"unknown hinge variant {hinge!r}")

    batch = a1.shape[0]
    diff = a1 - a2
    sq = (diff**2).sum(axis=1)
    dist = np.sqrt(sq)

    if hinge == "squared_distance":
        hinge_val = np.maximum(0.0, margin - sq)
        per_pair = (1.0 - labels) * sq + labels * hinge_val
        # d(sq)/dv1 = 2*diff; hinge branch active only while sq < margin
        coeff = (1.0 - labels) * 2.0 - labels * 2.0 * (sq < margin)
        dv1 = coeff[:, None] * diff / batch
    else:
        hinge_val = np.maximum(0.0, margin - dist)
        per_pair = (1.0 - labels) * sq + labels * hinge_val**2
        safe = np.where(dist > 0.0, dist, 1.0)
        coeff = (1.0 - labels) * 2.0 - labels * 2.0 * hinge_val / safe
        dv1 = coeff[:, None] * diff / batch

    loss = float(per_pair.sum() / batch)
    dv2 = -dv1
    if np.asarray(v1).ndim == 1:
        dv1, dv2 = dv1[0], dv2[0]
    return loss, dv1, dv2, dist
