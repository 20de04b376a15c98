"""Meta-loss backpropagation, momentum SGD, the training loop and inference."""
from __future__ import annotations

import copy
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
import torch

from ..data.transforms import AUGMENTED_COPIES, AugmentParams, DroppedGraspWarning, augment, preprocess
from ..errors import AllDiscarded, EmptyFold, NonFiniteGradient, ShapeMismatch
from ..geometry import GridSpec, decode_belief_map, render_belief_map
from ..gmm import BACKGROUND_FLOOR, DISCARD_NLL, rank_hypotheses
from ..metrics import evaluate
from ..mhp_loss import (
    apply_hypothesis_dropout,
    hindsight_meta_loss,
    meta_loss_gradient,
    select_gt_largest,
)
from .network import GraspNet, image_to_tensor

log = logging.getLogger(__name__)

GT_POLICIES = ("random", "largest_area")


@dataclass
class TrainConfig:
    learning_rate: float = 0.0005
    momentum: float = 0.9
    weight_decay: float = 0.0005
    epochs: int = 50
    batch_size: Optional[int] = None
    epsilon: float = 0.05
    hypothesis_dropout: float = 0.05
    gt_policy: Optional[str] = None
    seed: int = 0
    augment_copies: int = AUGMENTED_COPIES
    val_fraction: float = 0.1
    val_every: int = 1

    def resolved(self, num_heads):
        """Fill the head-count dependent defaults and validate."""
        cfg = copy.copy(self)
        if cfg.batch_size is None:
            cfg.batch_size = 5 if num_heads > 1 else 20
        if cfg.gt_policy is None:
            cfg.gt_policy = "random" if num_heads > 1 else "largest_area"
        if cfg.gt_policy not in GT_POLICIES:
            raise ValueError(f"gt_policy must be one of {GT_POLICIES}")
        if cfg.learning_rate <= 0 or not 0 <= cfg.momentum < 1 or cfg.weight_decay < 0:
            raise ValueError("invalid optimizer settings")
        if not 0 <= cfg.epsilon < 1 or not 0 <= cfg.hypothesis_dropout < 1:
            raise ValueError("epsilon and hypothesis_dropout must lie in [0, 1)")
        if cfg.epochs < 1 or cfg.batch_size < 1 or cfg.augment_copies < 0:
            raise ValueError("epochs, batch_size must be positive")
        if not 0 <= cfg.val_fraction < 1:
            raise ValueError("val_fraction must lie in [0, 1)")
        return cfg

    def to_dict(self):
        return asdict(self)


def backward(net, images, gt_maps, epsilon=0.05, dropout_rate=0.0, rng=None):
    """Gradients of the batch-mean meta-loss w.r.t. every parameter.

    The loss is taken on the unclamped maps.  Clamping at zero only moves a
    map closer to a non-negative target, so this bounds the loss of the
    clamped output from above, and unlike it never has a zero gradient on
    pixels that should light up.  The gradient is further divided by the
    number of map pixels, so learning rates are in per-pixel units and do
    not depend on the map size.  The winning hypothesis and the dropout mask are fixed before
    differentiation.  Returns ``(grads, results, weights)`` where ``grads``
    maps parameter names to tensors and ``weights`` are the post-dropout
    loss weights actually differentiated.
    """
    param = next(net.parameters())
    x = image_to_tensor(images, net.config, param.dtype)
    gts = np.asarray(gt_maps, dtype=np.float64)
    if gts.ndim == 2:
        gts = gts[None]
    out = net(x, clamp=False)
    if gts.shape != (out.shape[0],) + tuple(out.shape[2:]):
        raise ShapeMismatch(f"ground truth {gts.shape} vs network output {tuple(out.shape)}")
    pred = out.detach().double().numpy()
    batch = pred.shape[0]
    scale = 1.0 / (batch * pred.shape[2] * pred.shape[3])
    results, weights, grad = [], [], np.empty_like(pred)
    for b in range(batch):
        res = hindsight_meta_loss(pred[b], gts[b], epsilon)
        w = res.weights
        if dropout_rate > 0:
            w = apply_hypothesis_dropout(w, dropout_rate, rng, winner=res.winner)
        grad[b] = meta_loss_gradient(pred[b], gts[b], w) * scale
        results.append(res)
        weights.append(w)
    net.zero_grad(set_to_none=True)
    out.backward(torch.from_numpy(grad).to(out.dtype))
    grads = {name: p.grad.detach().clone() for name, p in net.named_parameters()}
    return grads, results, weights


def sgd_step(params, grads, cfg, velocity):
    """``v <- momentum v - lr (g + wd w)``; ``w <- w + v``, in place."""
    for name, g in grads.items():
        if not torch.isfinite(g).all():
            raise NonFiniteGradient(f"non-finite gradient in {name}")
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name] + cfg.weight_decay * p
            v = velocity.get(name)
            v = -cfg.learning_rate * g if v is None else cfg.momentum * v - cfg.learning_rate * g
            velocity[name] = v
            p.add_(v)
            if not torch.isfinite(p).all():
                raise NonFiniteGradient(f"parameter {name} became non-finite")
    return params, velocity


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float
    timestamp: float

    def to_line(self):
        return (f"epoch={self.epoch} train_loss={self.train_loss:.6f} "
                f"val_accuracy={self.val_accuracy:.2f} timestamp={self.timestamp:.3f}")

    @classmethod
    def from_line(cls, line):
        fields = dict(item.split("=", 1) for item in line.split())
        return cls(int(fields["epoch"]), float(fields["train_loss"]),
                   float(fields["val_accuracy"]), float(fields["timestamp"]))


@dataclass
class TrainResult:
    net: GraspNet
    log: List[EpochRecord]
    best_epoch: int
    val_ids: tuple = ()


@dataclass
class _Item:
    image: np.ndarray
    rects: list


def _prepare(sample, rng, copies):
    """``copies`` augmented, preprocessed versions of a sample (the plain crop if ``copies == 0``)."""
    if copies == 0:
        p = preprocess(sample, render_maps=False)
        return [_Item((p.image * 255).round().astype(np.uint8), p.rects)] if p.rects else []
    items = []
    attempts = 0
    while len(items) < copies and attempts < 20 * copies:
        attempts += 1
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DroppedGraspWarning)
            p = preprocess(augment(sample, AugmentParams.sample(rng)), render_maps=False)
        if p.rects:
            items.append(_Item((p.image * 255).round().astype(np.uint8), p.rects))
    return items


def _split_validation(samples, fraction, rng):
    if fraction <= 0:
        return samples, []
    objects = sorted({s.object_id for s in samples})
    n_val = int(round(fraction * len(objects)))
    if n_val == 0 or n_val >= len(objects):
        return samples, []
    val_objects = set(rng.choice(objects, size=n_val, replace=False).tolist())
    return ([s for s in samples if s.object_id not in val_objects],
            [s for s in samples if s.object_id in val_objects])


def _emit(sink, record):
    if sink is None:
        return
    if callable(sink):
        sink(record)
    else:
        sink.write(record.to_line() + "\n")
        sink.flush()


def train(samples, fold, net_cfg, train_cfg, sink=None):
    """Train a fresh network on the training side of ``fold``.

    ``fold`` is a ``(train_ids, test_ids)`` pair of source ids; the test side
    is never touched.  A fraction of training objects is held out for
    per-epoch validation, and the parameters with the best validation top-1
    accuracy are returned.
    """
    cfg = train_cfg.resolved(net_cfg.num_heads)
    train_ids = set(fold[0])
    pool = [s for s in samples if s.source_id in train_ids]
    if not pool:
        raise EmptyFold("training fold is empty")
    rng = np.random.default_rng(cfg.seed)
    torch.manual_seed(cfg.seed)
    fit_samples, val_samples = _split_validation(pool, cfg.val_fraction, rng)

    items = []
    for s in fit_samples:
        items.extend(_prepare(s, rng, cfg.augment_copies))
    if not items:
        raise EmptyFold("no training sample kept a ground-truth grasp")
    val_items = [preprocess(s, render_maps=False) for s in val_samples]
    val_items = [v for v in val_items if v.rects]

    net = GraspNet(net_cfg)
    params = dict(net.named_parameters())
    velocity = {}
    grid = GridSpec(*net_cfg.output_size[::-1])
    history, best_acc, best_state, best_epoch = [], -1.0, None, 0
    log.info("training M=%d on %d items (%d val samples)", net_cfg.num_heads, len(items), len(val_items))

    for epoch in range(1, cfg.epochs + 1):
        net.train()
        order = rng.permutation(len(items))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [items[i] for i in order[start:start + cfg.batch_size]]
            gts = []
            for item in batch:
                if cfg.gt_policy == "random":
                    rect = item.rects[int(rng.integers(len(item.rects)))]
                else:
                    rect = select_gt_largest(item.rects)
                gts.append(render_belief_map(rect, grid))
            images = np.stack([it.image for it in batch]).astype(np.float32) / 255.0
            grads, results, _ = backward(net, images, gts, cfg.epsilon, cfg.hypothesis_dropout, rng)
            sgd_step(params, grads, cfg, velocity)
            losses.extend(r.total for r in results)

        val_acc = float("nan")
        if val_items and (epoch % cfg.val_every == 0 or epoch == cfg.epochs):
            val_acc = evaluate_preprocessed(net, val_items).accuracy_top1
            if val_acc > best_acc:
                best_acc, best_epoch = val_acc, epoch
                best_state = copy.deepcopy(net.state_dict())
        record = EpochRecord(epoch, float(np.mean(losses)), val_acc, time.time())
        history.append(record)
        log.info(record.to_line())
        _emit(sink, record)

    if best_state is not None:
        net.load_state_dict(best_state)
    else:
        best_epoch = cfg.epochs
    net.eval()
    return TrainResult(net, history, best_epoch, tuple(s.source_id for s in val_samples))


@dataclass
class Prediction:
    ranked: list
    n_discarded: int
    maps: np.ndarray = field(repr=False, default=None)

    def hypotheses(self):
        """Rectangles in rank order followed by ``None`` for every discarded map."""
        return [rect for rect, _ in self.ranked] + [None] * self.n_discarded


def predict_maps(net, images):
    """Eval-mode hypothesis maps for a batch of images, shape ``(B, M, H, W)``."""
    net.eval()
    param = next(net.parameters())
    with torch.no_grad():
        out = net(image_to_tensor(images, net.config, param.dtype))
    return out.double().numpy()


def predict_from_maps(maps, discard_nll=DISCARD_NLL, background_floor=BACKGROUND_FLOOR):
    """Rank and decode hypothesis maps.  Raises :class:`AllDiscarded`."""
    ranking = rank_hypotheses(maps, discard_nll=discard_nll, background_floor=background_floor)
    ranked = [(decode_belief_map(ranking.maps[i], fit), fit) for i, fit in ranking]
    return Prediction(ranked, len(ranking.discarded), np.asarray(maps))


def predict(net, image, discard_nll=DISCARD_NLL, background_floor=BACKGROUND_FLOOR):
    return predict_from_maps(predict_maps(net, image)[0], discard_nll, background_floor)


def _safe_predict(maps, discard_nll, background_floor=BACKGROUND_FLOOR):
    try:
        return predict_from_maps(maps, discard_nll, background_floor)
    except AllDiscarded:
        return Prediction([], len(maps), np.asarray(maps))


def evaluate_preprocessed(net, items, discard_nll=DISCARD_NLL, batch_size=8, return_predictions=False,
                          background_floor=BACKGROUND_FLOOR):
    """Rectangle-metric report over preprocessed samples (``Preprocessed`` objects)."""
    predictions = []
    for start in range(0, len(items), batch_size):
        chunk = items[start:start + batch_size]
        maps = predict_maps(net, np.stack([it.image for it in chunk]).astype(np.float32))
        predictions.extend(_safe_predict(m, discard_nll, background_floor) for m in maps)
    report = evaluate([p.hypotheses() for p in predictions], [it.rects for it in items])
    return (report, predictions) if return_predictions else report


def evaluate_model(net, samples, discard_nll=DISCARD_NLL, return_predictions=False,
                   background_floor=BACKGROUND_FLOOR):
    """Preprocess raw samples (no augmentation) and score the network on them."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DroppedGraspWarning)
        items = [preprocess(s, render_maps=False) for s in samples]
    items = [it for it in items if it.rects]
    return evaluate_preprocessed(net, items, discard_nll, return_predictions=return_predictions,
                                 background_floor=background_floor)


def parameter_checksum(net):
    """Deterministic fingerprint of all parameter values."""
    import hashlib

    digest = hashlib.sha256()
    for name, p in sorted(net.state_dict().items()):
        digest.update(name.encode())
        digest.update(p.detach().cpu().numpy().astype("<f8").tobytes())
    return digest.hexdigest()

