"""L2 map loss, the epsilon-soft hindsight meta-loss and ground-truth selection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyGroundTruth

DEFAULT_EPSILON = 0.05


def l2_loss(pred, gt):
    """Squared Euclidean distance between two maps."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    diff = pred - gt
    return float(np.sum(diff * diff))


@dataclass
class MetaLossResult:
    total: float
    per_hypothesis: np.ndarray
    weights: np.ndarray
    winner: int


def meta_loss_weights(m, winner, epsilon):
    """Weight ``1 - eps`` on the winner and ``eps / (M - 1)`` on every other hypothesis."""
    if m == 1:
        return np.ones(1)
    weights = np.full(m, epsilon / (m - 1))
    weights[winner] = 1.0 - epsilon
    return weights


def hindsight_meta_loss(hyps, gt, epsilon=DEFAULT_EPSILON):
    """Oracle meta-loss over ``M`` hypothesis maps for one ground-truth map.

    ``hyps`` is a sequence of maps or an ``(M, H, W)`` array.  Ties in the
    arg-min go to the lowest index.  For ``M = 1`` this is plain L2.
    """
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")
    hyps = np.asarray(hyps, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if hyps.ndim != 3 or hyps.shape[0] < 1:
        raise DimensionMismatch("expected a non-empty stack of 2D hypothesis maps")
    if hyps.shape[1:] != gt.shape:
        raise DimensionMismatch(f"hypotheses {hyps.shape[1:]} vs ground truth {gt.shape}")
    diff = hyps - gt
    losses = np.einsum("mij,mij->m", diff, diff)
    winner = int(np.argmin(losses))
    weights = meta_loss_weights(len(losses), winner, epsilon)
    return MetaLossResult(total=float(weights @ losses), per_hypothesis=losses,
                          weights=weights, winner=winner)


def meta_loss_gradient(hyps, gt, weights):
    """Gradient of ``sum_m weights[m] * L_m`` w.r.t. each hypothesis map (weights held fixed)."""
    hyps = np.asarray(hyps, dtype=np.float64)
    return 2.0 * np.asarray(weights)[:, None, None] * (hyps - np.asarray(gt, dtype=np.float64))


def select_gt_random(gts, rng):
    """Uniformly pick one ground truth using ``rng`` (a ``numpy.random.Generator``)."""
    if len(gts) == 0:
        raise EmptyGroundTruth("no ground truth to choose from")
    return gts[int(rng.integers(len(gts)))]


def select_gt_largest(gts):
    """Ground-truth rectangle with the largest ``w * h``; first one wins ties."""
    if len(gts) == 0:
        raise EmptyGroundTruth("no ground truth to choose from")
    best = 0
    for i, rect in enumerate(gts):
        if rect.w * rect.h > gts[best].w * gts[best].h:
            best = i
    return gts[best]


def apply_hypothesis_dropout(weights, rate, rng, winner=None):
    """Zero each hypothesis weight with probability ``rate`` and renormalize.

    If every weight is dropped, the winner (by default the largest weight)
    is restored with weight one.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    weights = np.asarray(weights, dtype=np.float64)
    drop = rng.random(len(weights)) < rate
    if not drop.any():
        return weights.copy()
    kept = np.where(drop, 0.0, weights)
    if kept.sum() <= 0:
        kept = np.zeros_like(weights)
        kept[int(np.argmax(weights)) if winner is None else winner] = 1.0
        return kept
    return kept / kept.sum()
