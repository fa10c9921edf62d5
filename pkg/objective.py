"""Training objective: Laplace NLL on the best mode plus mode classification"""

import logging
import math
from collections import Counter
from typing import NamedTuple

import numpy as np

from autograd import ops
from autograd.tensor import DomainError, Tensor
from model.decoder import TrajectoryPrediction

logger = logging.getLogger(__name__)

PROB_EPS = 1e-12

warning_counts: Counter = Counter()


class LossTerms(NamedTuple):
    reg: Tensor
    cls: Tensor
    total: Tensor


def _array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def average_displacement(mu, gt) -> np.ndarray:
    """Mean over time of the l2 error of every mode, [B, M]."""
    diff = _array(mu).astype(np.float64) - _array(gt).astype(np.float64)[:, None]
    return np.linalg.norm(diff, axis=-1).mean(axis=-1)


def best_mode(mu, gt) -> np.ndarray:
    """Index of the mode closest to ``gt`` on average, lowest index on ties.

    The selection is a hard assignment; no gradient flows through it.
    """
    return np.argmin(average_displacement(mu, gt), axis=1)


def laplace_nll(mu: Tensor, b: Tensor, target) -> Tensor:
    """Per-coordinate log(2b) + |y - mu| / b, summed over the last axis."""
    if (b.data <= 0).any():
        raise DomainError("Laplace scale must be positive")
    err = ops.absolute(ops.sub(Tensor(np.asarray(target), dtype=mu.dtype), mu))
    return (ops.log(b * 2.0) + err / b).sum(axis=-1)


def regression_loss(mu_best: Tensor, b_best: Tensor, gt) -> Tensor:
    """Laplace NLL of the selected mode, averaged over time and batch.

    Args:
        mu_best: [B, T_o, 2] locations of the best mode.
        b_best: [B, T_o, 2] scales of the best mode.
        gt: [B, T_o, 2] ground-truth positions.
    """
    return laplace_nll(mu_best, b_best, gt).mean()


def _final_log_likelihood(mu: np.ndarray, b: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """log Laplace density of the last ground-truth point under each mode, [B, M]."""
    diff = np.abs(gt[:, None, -1] - mu[:, :, -1])
    return -(np.log(2.0 * b[:, :, -1]) + diff / b[:, :, -1]).sum(axis=-1)


def classification_loss(pi: Tensor, mu, b, gt, normalized: bool = True) -> Tensor:
    """Cross-entropy of ``pi`` against endpoint likelihood weights.

    The weights w(k) are the Laplace likelihoods of the final ground-truth
    point under each mode's final (mu, b). They are constants: no gradient
    reaches mu or b. With ``normalized`` the weights are rescaled to sum to
    one over modes.

    Returns:
        Tensor: -(1/M) sum_k log(pi_k) w_k, averaged over the batch.
    """
    log_w = _final_log_likelihood(_array(mu).astype(np.float64), _array(b).astype(np.float64),
                                  _array(gt).astype(np.float64))
    if normalized:
        log_w = log_w - log_w.max(axis=1, keepdims=True)
        w = np.exp(log_w)
        w /= w.sum(axis=1, keepdims=True)
    else:
        w = np.exp(log_w)

    clamped = int(((pi.data < PROB_EPS) & (w > 0)).sum())
    if clamped:
        warning_counts["cls_log_clamp"] += clamped
        logger.warning(f"clamped log of {clamped} vanishing mode probabilities")
    log_pi = ops.log(ops.clip(pi, PROB_EPS, 1.0))
    modes = pi.shape[1]
    weighted = log_pi * w.astype(pi.dtype)
    return -(weighted.sum(axis=1) / modes).mean()


def compute_losses(prediction: TrajectoryPrediction, gt, normalized: bool = True) -> LossTerms:
    gt = _array(gt)
    k = best_mode(prediction.mu, gt)
    rows = np.arange(len(k))
    reg = regression_loss(prediction.mu[rows, k], prediction.b[rows, k], gt)
    cls = classification_loss(prediction.pi, prediction.mu.data, prediction.b.data, gt, normalized=normalized)
    return LossTerms(reg, cls, reg + cls)


def total_loss(prediction: TrajectoryPrediction, gt, normalized: bool = True) -> Tensor:
    """L_reg + L_cls with unit weights"""
    return compute_losses(prediction, gt, normalized).total


def regression_floor(b_min: float) -> float:
    """Lower bound of the regression loss for scales >= b_min."""
    return 2.0 * math.log(2.0 * b_min)
