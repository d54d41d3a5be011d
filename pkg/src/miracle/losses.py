"""Focal loss for imbalanced binary outcomes, with exact gradients, and the
batch objective that adds the KL penalty from the variational layers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import MiracleError

P_CLAMP = 1e-7


@dataclass(frozen=True)
class FocalParams:
    alpha: float = 0.8
    gamma: float = 4.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise MiracleError("alpha must be in (0, 1)")
        if self.gamma < 0.0:
            raise MiracleError("gamma must be nonnegative")


def focal_loss(p_hat: float, y: int, params: FocalParams) -> float:
    """alpha_t * (1 - p_t)^gamma * (-log p_t) with p_hat clamped away from {0,1}.

    alpha_t is params.alpha for positives and 1 - alpha for negatives.
    """
    if y not in (0, 1):
        raise MiracleError(f"label must be 0 or 1, got {y!r}")
    p = min(max(float(p_hat), P_CLAMP), 1.0 - P_CLAMP)
    p_t = p if y == 1 else 1.0 - p
    a = params.alpha if y == 1 else 1.0 - params.alpha
    return a * (1.0 - p_t) ** params.gamma * (-np.log(p_t))


def focal_loss_from_logit(logit: float, y: int, params: FocalParams) -> float:
    if y not in (0, 1):
        raise MiracleError(f"label must be 0 or 1, got {y!r}")
    loss, _ = kernels.focal_terms(np.array([logit]), np.array([y]), params.alpha, params.gamma)
    return float(loss[0])


def focal_loss_grad(logit: float, y: int, params: FocalParams) -> float:
    """Exact d(focal_loss)/d(logit) through the sigmoid."""
    if y not in (0, 1):
        raise MiracleError(f"label must be 0 or 1, got {y!r}")
    _, grad = kernels.focal_terms(np.array([logit]), np.array([y]), params.alpha, params.gamma)
    return float(grad[0])


def focal_batch(logits: np.ndarray, ys: np.ndarray, params: FocalParams):
    """Vectorized per-sample focal losses and logit gradients."""
    return kernels.focal_terms(logits, ys, params.alpha, params.gamma)


def batch_objective(p_hats, ys, params: FocalParams, total_kl: float, kl_weight: float) -> float:
    """Mean focal loss over the batch plus kl_weight * total_kl."""
    p_hats = np.asarray(p_hats, dtype=np.float64)
    ys = np.asarray(ys)
    if p_hats.shape != ys.shape:
        raise MiracleError("p_hats and ys must have equal length")
    if p_hats.size == 0:
        raise MiracleError("empty batch")
    mean = float(np.mean([focal_loss(p, int(y), params) for p, y in zip(p_hats, ys)]))
    return mean + kl_weight * total_kl
