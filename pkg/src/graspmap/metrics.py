"""Rectangle metric, multi-hypothesis accuracy report and diversity diagnostic."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyGroundTruth, LengthMismatch, ZeroNormMap
from .geometry import GraspRectangle, rectangle_to_corners

IOU_THRESHOLD = 0.25
ANGLE_THRESHOLD = 30.0


def _polygon_area(poly):
    if len(poly) < 3:
        return 0.0
    p = np.asarray(poly)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_convex(subject, clip):
    """Sutherland-Hodgman clipping of ``subject`` by the convex, counter-clockwise ``clip``."""
    output = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not output:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay

        def side(p):
            return ex * (p[1] - ay) - ey * (p[0] - ax)

        polygon, output = output, []
        prev = polygon[-1]
        prev_side = side(prev)
        for cur in polygon:
            cur_side = side(cur)
            if cur_side >= 0:
                if prev_side < 0:
                    output.append(_intersect(prev, cur, prev_side, cur_side))
                output.append(cur)
            elif prev_side >= 0:
                output.append(_intersect(prev, cur, prev_side, cur_side))
            prev, prev_side = cur, cur_side
    return output


def _intersect(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def iou(a: GraspRectangle, b: GraspRectangle) -> float:
    """Exact intersection over union of two oriented grasp rectangles."""
    pa = rectangle_to_corners(a)
    pb = rectangle_to_corners(b)
    inter = abs(_polygon_area(clip_convex(pa, pb)))
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return float(min(max(inter / union, 0.0), 1.0))


def angle_difference(a, b):
    """Smallest difference between two grasp angles, in [0, 90] degrees."""
    d = abs(float(a) - float(b)) % 180.0
    return min(d, 180.0 - d)


@dataclass(frozen=True)
class EvalVerdict:
    valid: bool
    best_iou: float
    angle_diff: float
    matched_gt_index: Optional[int]


def is_valid_grasp(pred: GraspRectangle, gts: Sequence[GraspRectangle],
                   iou_threshold=IOU_THRESHOLD, angle_threshold=ANGLE_THRESHOLD) -> EvalVerdict:
    """Rectangle metric against any of the ground truths.

    The verdict reports the highest-IoU ground truth among those within the
    angle limit, falling back to the overall highest-IoU one.
    """
    if len(gts) == 0:
        raise EmptyGroundTruth("no ground-truth rectangles to compare against")
    scores = [(iou(pred, gt), angle_difference(pred.theta, gt.theta)) for gt in gts]
    in_angle = [i for i, (_, ang) in enumerate(scores) if ang <= angle_threshold]
    pool = in_angle or range(len(gts))
    best = max(pool, key=lambda i: (scores[i][0], -i))
    best_iou, best_angle = scores[best]
    valid = bool(in_angle) and best_iou >= iou_threshold
    return EvalVerdict(valid, best_iou, best_angle, best)


@dataclass
class SampleResult:
    top1: bool
    n_valid: int
    n_hypotheses: int
    n_discarded: int
    top_verdict: Optional[EvalVerdict] = None

    @property
    def any_valid(self):
        return self.n_valid > 0


@dataclass
class EvalReport:
    accuracy_top1: float
    accuracy_lower: float
    accuracy_upper: float
    n_samples: int
    n_discarded: int
    per_sample: list = field(default_factory=list, repr=False)

    def limits_ordered(self):
        return self.accuracy_lower <= self.accuracy_top1 <= self.accuracy_upper

    def summary(self):
        return {k: v for k, v in asdict(self).items() if k != "per_sample"}

    def to_text(self):
        return "".join(f"{k}={v}\n" for k, v in self.summary().items())

    def to_json(self):
        return json.dumps(self.summary(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    @classmethod
    def from_text(cls, text):
        values = dict(line.split("=", 1) for line in text.splitlines() if line.strip())
        return cls(accuracy_top1=float(values["accuracy_top1"]),
                   accuracy_lower=float(values["accuracy_lower"]),
                   accuracy_upper=float(values["accuracy_upper"]),
                   n_samples=int(values["n_samples"]),
                   n_discarded=int(values["n_discarded"]))


def evaluate_sample(hypotheses, gts) -> SampleResult:
    """Score one sample's rank-ordered hypotheses; ``None`` entries are discarded ones."""
    hypotheses = list(hypotheses)
    verdicts = [None if h is None else is_valid_grasp(h, gts) for h in hypotheses]
    survivors = [v for v in verdicts if v is not None]
    top = survivors[0] if survivors else None
    return SampleResult(
        top1=bool(top is not None and top.valid),
        n_valid=sum(v.valid for v in survivors),
        n_hypotheses=len(hypotheses),
        n_discarded=len(hypotheses) - len(survivors),
        top_verdict=top,
    )


def evaluate(predictions, gts) -> EvalReport:
    """Top-1, lower-limit and upper-limit grasp accuracy in percent.

    ``predictions[i]`` lists sample ``i``'s hypotheses in rank order, with
    ``None`` marking a discarded one.  Discarded hypotheses count as failed
    trials for the lower limit; a sample with no survivor fails top-1.
    """
    predictions = list(predictions)
    gts = list(gts)
    if len(predictions) != len(gts):
        raise LengthMismatch(f"{len(predictions)} prediction lists for {len(gts)} ground-truth lists")
    results = [evaluate_sample(p, g) for p, g in zip(predictions, gts)]
    n = len(results)
    trials = sum(r.n_hypotheses for r in results)
    if n == 0:
        return EvalReport(0.0, 0.0, 0.0, 0, 0, [])
    return EvalReport(
        accuracy_top1=100.0 * sum(r.top1 for r in results) / n,
        accuracy_lower=100.0 * sum(r.n_valid for r in results) / trials if trials else 0.0,
        accuracy_upper=100.0 * sum(r.any_valid for r in results) / n,
        n_samples=n,
        n_discarded=sum(r.n_discarded for r in results),
        per_sample=results,
    )


def avg_cosine_distance(maps):
    """Mean of ``1 - cos`` over all unordered pairs of flattened maps."""
    maps = [np.asarray(m, dtype=np.float64).ravel() for m in maps]
    if len(maps) < 2:
        raise ValueError("need at least two maps")
    if len({m.size for m in maps}) != 1:
        raise LengthMismatch("maps differ in size")
    stack = np.stack(maps)
    norms = np.linalg.norm(stack, axis=1)
    if np.any(norms == 0):
        raise ZeroNormMap("cosine distance is undefined for an all-zero map")
    unit = stack / norms[:, None]
    sims = unit @ unit.T
    i, j = np.triu_indices(len(maps), k=1)
    return float(np.mean(1.0 - np.clip(sims[i, j], -1.0, 1.0)))
