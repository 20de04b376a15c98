"""Weighted-pixel EM fitting of Gaussian mixtures to belief maps, and hypothesis ranking.

Every pixel centre is a data point whose weight is its map value; weights are
normalized to sum to one, so the fit and its log-likelihood do not depend on
the overall scale of the map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AllDiscarded, DegenerateMap, EmptyMap, GraspMapError, SingularCovariance
from .geometry import decode_belief_map

VARIANCE_FLOOR = 0.25
DISCARD_NLL = 12.0
# before ranking, values below this fraction of a map's peak are zeroed
BACKGROUND_FLOOR = 0.1
MIN_INIT_SEPARATION = 3.0
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class GmmFit:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    nll: float
    iterations: int
    converged: bool
    log_likelihood_trace: list = field(default_factory=list, repr=False)

    @property
    def k(self):
        return len(self.weights)


def _pixel_data(belief):
    belief = np.asarray(belief, dtype=np.float64)
    if belief.ndim != 2:
        raise ValueError("belief map must be 2D")
    if not np.all(np.isfinite(belief)):
        raise EmptyMap("belief map contains non-finite values")
    if np.any(belief < 0):
        raise ValueError("belief map values must be non-negative")
    total = belief.sum()
    if not total > 0:
        raise EmptyMap("belief map has zero total mass")
    rows, cols = np.nonzero(belief)
    points = np.stack([cols, rows], axis=1).astype(np.float64)
    return points, belief[rows, cols] / total


def _initial_means(belief, k):
    """Highest-valued pixels, each at least MIN_INIT_SEPARATION px from those already taken."""
    flat = np.argsort(-belief, axis=None, kind="stable")
    rows, cols = np.unravel_index(flat, belief.shape)
    chosen = []
    for r, c in zip(rows, cols):
        p = np.array([c, r], dtype=np.float64)
        if all(np.hypot(*(p - q)) >= MIN_INIT_SEPARATION for q in chosen):
            chosen.append(p)
            if len(chosen) == k:
                break
    if len(chosen) < k:
        raise DegenerateMap("map too small to place initial means")
    return np.array(chosen)


def _component_log_density(points, mean, cov):
    a, b, d = cov[0, 0], cov[0, 1], cov[1, 1]
    det = a * d - b * b
    if not det > 0:
        raise SingularCovariance(f"covariance determinant {det}")
    dx = points[:, 0] - mean[0]
    dy = points[:, 1] - mean[1]
    quad = (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det
    return -0.5 * quad - 0.5 * math.log(det) - LOG_2PI


def _log_joint(points, weights, means, covs):
    out = np.empty((points.shape[0], len(weights)))
    with np.errstate(divide="ignore"):
        for j in range(len(weights)):
            out[:, j] = np.log(weights[j]) + _component_log_density(points, means[j], covs[j])
    return out


def _floor_covariance(cov, floor):
    vals, vecs = np.linalg.eigh(cov)
    vals = np.maximum(vals, floor)
    return (vecs * vals) @ vecs.T


def em_fit(belief, k=2, max_iter=1000, tol=1e-6, variance_floor=VARIANCE_FLOOR):
    """Fit a ``k``-component Gaussian mixture to ``belief`` by EM.

    Stops when the relative change of the weighted log-likelihood drops below
    ``tol`` or after ``max_iter`` iterations.  Covariance eigenvalues are
    clipped at ``variance_floor``, which is the exact constrained M-step, so
    the log-likelihood trace stays non-decreasing.
    """
    belief = np.asarray(belief, dtype=np.float64)
    points, mass = _pixel_data(belief)
    height, width = belief.shape
    means = _initial_means(belief, k)
    weights = np.full(k, 1.0 / k)
    covs = np.array([np.eye(2) * max((width / 16.0) ** 2, variance_floor)] * k)

    trace = []
    converged = False
    iterations = 0
    log_joint = _log_joint(points, weights, means, covs)
    for iterations in range(1, max_iter + 1):
        top = log_joint.max(axis=1, keepdims=True)
        log_norm = top[:, 0] + np.log(np.exp(log_joint - top).sum(axis=1))
        ll = float(mass @ log_norm)
        trace.append(ll)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= tol * abs(trace[-2]):
            converged = True
            break

        resp = np.exp(log_joint - log_norm[:, None]) * mass[:, None]
        nk = resp.sum(axis=0)
        weights = nk / nk.sum()
        for j in range(k):
            if nk[j] <= 0:
                continue
            means[j] = resp[:, j] @ points / nk[j]
            diff = points - means[j]
            scatter = (diff * resp[:, j, None]).T @ diff / nk[j]
            covs[j] = _floor_covariance(scatter, variance_floor)
        log_joint = _log_joint(points, weights, means, covs)
    else:
        top = log_joint.max(axis=1, keepdims=True)
        log_norm = top[:, 0] + np.log(np.exp(log_joint - top).sum(axis=1))
        trace.append(float(mass @ log_norm))

    nll = -trace[-1]
    if not math.isfinite(nll):
        raise SingularCovariance("log-likelihood became non-finite")
    return GmmFit(weights=weights, means=means.copy(), covariances=covs.copy(), nll=nll,
                  iterations=iterations, converged=converged, log_likelihood_trace=trace)


@dataclass
class Ranking:
    """Surviving hypotheses, best fit first, plus the reason each rejected one failed."""

    ranked: list
    discarded: dict
    maps: list = field(default_factory=list, repr=False)

    def __iter__(self):
        return iter(self.ranked)

    def __len__(self):
        return len(self.ranked)

    @property
    def indices(self):
        return [i for i, _ in self.ranked]


def screen_fit(belief, fit, discard_nll=DISCARD_NLL):
    """Return ``None`` if a fitted hypothesis is usable, otherwise the reason it is not."""
    if not fit.converged:
        return "not converged"
    if fit.nll > discard_nll:
        return f"nll {fit.nll:.3f} exceeds {discard_nll}"
    try:
        decode_belief_map(belief, fit)
    except DegenerateMap as exc:
        return f"degenerate: {exc}"
    return None


def suppress_background(belief, floor=BACKGROUND_FLOOR):
    """Copy of ``belief`` with values below ``floor`` times its peak set to zero.

    Weighted-pixel EM gives every pixel a say, so a faint haze spread over
    the whole map can outweigh two compact modes; regressed maps carry
    exactly that kind of haze.
    """
    belief = np.array(belief, dtype=np.float64)
    peak = belief.max() if belief.size else 0.0
    if floor > 0 and peak > 0:
        belief[belief < floor * peak] = 0.0
    return belief


def rank_hypotheses(maps, discard_nll=DISCARD_NLL, max_iter=1000, tol=1e-6,
                    background_floor=BACKGROUND_FLOOR):
    """Fit every map and order the usable ones by ascending normalized NLL.

    Maps first go through :func:`suppress_background`; the cleaned maps are
    kept on the result for decoding.  Ties keep index order.  Raises
    :class:`AllDiscarded` if nothing survives.
    """
    maps = [suppress_background(m, background_floor) for m in maps]
    if not maps:
        raise ValueError("need at least one hypothesis map")
    survivors = []
    discarded = {}
    for index, belief in enumerate(maps):
        try:
            fit = em_fit(belief, k=2, max_iter=max_iter, tol=tol)
        except GraspMapError as exc:
            discarded[index] = f"fit failed: {exc}"
            continue
        reason = screen_fit(belief, fit, discard_nll)
        if reason is None:
            survivors.append((index, fit))
        else:
            discarded[index] = reason
    if not survivors:
        raise AllDiscarded(f"all {len(maps)} hypotheses discarded", discarded)
    survivors.sort(key=lambda item: (item[1].nll, item[0]))
    return Ranking(survivors, discarded, maps)
