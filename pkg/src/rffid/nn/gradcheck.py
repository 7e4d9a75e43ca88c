"""Finite-difference verification of analytic gradients.

The numeric side re-evaluates the scalar loss with each parameter entry
perturbed by +-step (central differences, float64 accumulation), fully
independent of the backward pass it checks.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .layers import Network
from .losses import contrastive_loss, cross_entropy
from .params import ParamSet

DEFAULT_STEP = 1e-4


def max_relative_error(analytic: ParamSet, numeric: ParamSet) -> float:
    worst = 0.0
    for name in analytic:
        a = analytic[name].ravel()
        n = numeric[name].ravel()
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def numeric_gradient(
    loss_fn: Callable[[], float], params: ParamSet, step: float = DEFAULT_STEP
) -> ParamSet:
    grads = params.zeros_like()
    for name in params:
        value = params[name]
        grad = grads[name]
        flat_value = value.ravel()
        flat_grad = grad.ravel()
        for i in range(flat_value.size):
            original = flat_value[i]
            flat_value[i] = original + step
            upper = loss_fn()
            flat_value[i] = original - step
            lower = loss_fn()
            flat_value[i] = original
            flat_grad[i] = (upper - lower) / (2.0 * step)
    return grads


def grad_check_classifier(
    net: Network,
    params: ParamSet,
    x: np.ndarray,
    target: np.ndarray,
    step: float = DEFAULT_STEP,
) -> float:
    """Max relative error of the fused softmax/cross-entropy backward."""
    probs, cache = net.forward(params, x)
    _, dlogits = cross_entropy(probs, target)
    analytic, _ = net.backward_fused_ce(params, cache, dlogits)

    def loss_fn() -> float:
        p, _ = net.forward(params, x)
        loss, _ = cross_entropy(p, target)
        return loss

    return max_relative_error(analytic, numeric_gradient(loss_fn, params, step))


def grad_check_siamese(
    net: Network,
    params: ParamSet,
    x1: np.ndarray,
    x2: np.ndarray,
    label: int,
    margin: float,
    hinge: str = "squared_distance",
    step: float = DEFAULT_STEP,
) -> float:
    """Max relative error of the contrastive loss through both weight-tied
    branches."""
    v1, cache1 = net.forward(params, x1)
    v2, cache2 = net.forward(params, x2)
    _, dv1, dv2, _ = contrastive_loss(v1, v2, label, margin, hinge)
    grads1, _ = net.backward(params, cache1, dv1)
    grads2, _ = net.backward(params, cache2, dv2)
    analytic = ParamSet(
        {name: grads1[name] + grads2[name] for name in grads1}
    )

    def loss_fn() -> float:
        e1, _ = net.forward(params, x1)
        e2, _ = net.forward(params, x2)
        loss, _, _, _ = contrastive_loss(e1, e2, label, margin, hinge)
        return loss

    return max_relative_error(analytic, numeric_gradient(loss_fn, params, step))
