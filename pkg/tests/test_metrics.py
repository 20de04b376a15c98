import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from shapely.geometry import Polygon

from graspmap.errors import EmptyGroundTruth, LengthMismatch, ZeroNormMap
from graspmap.geometry import GraspRectangle, rectangle_to_corners
from graspmap.metrics import (
    EvalReport,
    angle_difference,
    avg_cosine_distance,
    clip_convex,
    evaluate,
    iou,
    is_valid_grasp,
)

rects = st.builds(
    GraspRectangle,
    x=st.floats(0, 40), y=st.floats(0, 40), theta=st.floats(0, 180),
    h=st.floats(1, 30), w=st.floats(1, 30),
)


def shapely_iou(a, b):
    pa, pb = Polygon(rectangle_to_corners(a)), Polygon(rectangle_to_corners(b))
    union = pa.union(pb).area
    return pa.intersection(pb).area / union if union else 0.0


@given(rects, rects)
def test_iou_matches_independent_polygon_library(a, b):
    assert iou(a, b) == pytest.approx(shapely_iou(a, b), abs=1e-9)


@given(rects, rects)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(iou(b, a), abs=1e-9)


@given(rects)
def test_self_iou_is_one(a):
    assert iou(a, a) == pytest.approx(1.0, abs=1e-9)


def test_iou_hand_cases():
    a = GraspRectangle(0, 0, 0, 2, 2)
    assert iou(a, GraspRectangle(1, 0, 0, 2, 2)) == pytest.approx(1 / 3)
    assert iou(a, GraspRectangle(5, 0, 0, 2, 2)) == 0.0
    # square rotated 45 degrees inside its own bounding square
    inner = GraspRectangle(0, 0, 45, math.sqrt(2), math.sqrt(2))
    assert iou(a, inner) == pytest.approx(0.5)


def test_clip_convex_square():
    sq = [(0, 0), (2, 0), (2, 2), (0, 2)]
    out = clip_convex([(1, 1), (3, 1), (3, 3), (1, 3)], sq)
    assert Polygon(out).area == pytest.approx(1.0)


@pytest.mark.parametrize("a,b,expected", [(0, 0, 0), (10, 170, 20), (0, 90, 90), (179, 1, 2), (45, 225, 0)])
def test_angle_difference(a, b, expected):
    assert angle_difference(a, b) == pytest.approx(expected)


def test_rectangle_metric_boundaries():
    gt = GraspRectangle(50, 50, 0, 10, 20)
    assert is_valid_grasp(gt, [gt]).valid
    assert is_valid_grasp(GraspRectangle(50, 50, 30, 10, 20), [gt]).valid
    assert not is_valid_grasp(GraspRectangle(50, 50, 31, 10, 20), [gt]).valid
    assert not is_valid_grasp(GraspRectangle(80, 50, 0, 10, 20), [gt]).valid
    with pytest.raises(EmptyGroundTruth):
        is_valid_grasp(gt, [])


def test_metric_uses_any_ground_truth():
    gts = [GraspRectangle(10, 10, 0, 10, 20), GraspRectangle(60, 60, 90, 10, 20)]
    verdict = is_valid_grasp(GraspRectangle(61, 60, 95, 10, 20), gts)
    assert verdict.valid and verdict.matched_gt_index == 1


def test_accuracy_definitions():
    gt = [GraspRectangle(50, 50, 0, 10, 20)]
    good = GraspRectangle(50, 50, 5, 10, 20)
    bad = GraspRectangle(10, 10, 0, 10, 20)
    report = evaluate([[good, bad, None], [bad, good], [None, None]], [gt, gt, gt])
    assert report.accuracy_top1 == pytest.approx(100 / 3)
    # two valid hypotheses among 7 trials, discarded ones count as failures
    assert report.accuracy_lower == pytest.approx(200 / 7)
    assert report.accuracy_upper == pytest.approx(200 / 3)
    assert report.n_discarded == 3
    assert report.limits_ordered()


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        evaluate([[None]], [])


@given(st.lists(st.lists(st.one_of(st.none(), rects), min_size=1, max_size=5), min_size=1, max_size=8),
       st.data())
def test_top1_never_exceeds_upper(preds, data):
    gts = [data.draw(st.lists(rects, min_size=1, max_size=3)) for _ in preds]
    report = evaluate(preds, gts)
    assert report.accuracy_top1 <= report.accuracy_upper
    assert report.accuracy_lower <= report.accuracy_upper


def test_report_round_trips():
    report = EvalReport(81.25, 60.0, 95.5, 16, 3)
    assert EvalReport.from_json(report.to_json()).summary() == report.summary()
    assert EvalReport.from_text(report.to_text()).summary() == report.summary()
    assert json.loads(report.to_json())["n_samples"] == 16


def test_cosine_distance():
    a = np.zeros((4, 4))
    a[0, 0] = 1
    b = np.zeros((4, 4))
    b[3, 3] = 2
    assert avg_cosine_distance([a, a]) == pytest.approx(0.0)
    assert avg_cosine_distance([a, b]) == pytest.approx(1.0)
    assert avg_cosine_distance([a, a, b]) == pytest.approx(2 / 3)
    with pytest.raises(ZeroNormMap):
        avg_cosine_distance([a, np.zeros((4, 4))])
