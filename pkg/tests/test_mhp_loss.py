import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from graspmap.errors import DimensionMismatch, EmptyGroundTruth
from graspmap.geometry import GraspRectangle
from graspmap.mhp_loss import (
    apply_hypothesis_dropout,
    hindsight_meta_loss,
    l2_loss,
    meta_loss_gradient,
    meta_loss_weights,
    select_gt_largest,
    select_gt_random,
)


def maps_with_losses(losses):
    """Hypotheses whose L2 distance to an all-zero target equals ``losses``."""
    hyps = np.zeros((len(losses), 1, 1))
    hyps[:, 0, 0] = np.sqrt(losses)
    return hyps, np.zeros((1, 1))


def test_two_hypothesis_hand_case():
    hyps, gt = maps_with_losses([1.0, 3.0])
    res = hindsight_meta_loss(hyps, gt, epsilon=0.05)
    assert res.total == pytest.approx(0.95 * 1 + 0.05 * 3, abs=1e-9)
    assert res.total == pytest.approx(1.1, abs=1e-9)
    assert res.winner == 0


def test_five_hypothesis_hand_case():
    hyps, gt = maps_with_losses([4.0, 2.0, 8.0, 6.0, 10.0])
    res = hindsight_meta_loss(hyps, gt, epsilon=0.2)
    expected = 0.8 * 2.0 + 0.05 * (4 + 8 + 6 + 10)
    assert res.total == pytest.approx(expected, abs=1e-9)
    np.testing.assert_allclose(res.weights, [0.05, 0.8, 0.05, 0.05, 0.05])


def test_single_hypothesis_is_plain_l2():
    rng = np.random.default_rng(0)
    h, g = rng.random((1, 8, 8)), rng.random((8, 8))
    assert hindsight_meta_loss(h, g, 0.05).total == pytest.approx(l2_loss(h[0], g), abs=1e-12)


@given(st.lists(st.floats(0, 100), min_size=1, max_size=8))
def test_epsilon_zero_is_min(losses):
    hyps, gt = maps_with_losses(losses)
    assert hindsight_meta_loss(hyps, gt, 0.0).total == pytest.approx(min(losses), abs=1e-9)


@given(st.integers(1, 10), st.floats(0, 0.99), st.data())
def test_weights_sum_to_one(m, eps, data):
    winner = data.draw(st.integers(0, m - 1))
    w = meta_loss_weights(m, winner, eps)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    if m > 1:
        assert w[winner] == pytest.approx(1 - eps)


def test_ties_go_to_lowest_index():
    hyps, gt = maps_with_losses([2.0, 1.0, 1.0])
    assert hindsight_meta_loss(hyps, gt).winner == 1


def test_l2_shape_check():
    with pytest.raises(DimensionMismatch):
        l2_loss(np.zeros((2, 2)), np.zeros((3, 2)))
    with pytest.raises(DimensionMismatch):
        hindsight_meta_loss(np.zeros((2, 2, 2)), np.zeros((3, 2)))


@given(arrays(np.float64, (3, 4, 4), elements=st.floats(-2, 2)),
       arrays(np.float64, (4, 4), elements=st.floats(0, 1)))
def test_gradient_matches_finite_differences(hyps, gt):
    res = hindsight_meta_loss(hyps, gt, 0.1)
    grad = meta_loss_gradient(hyps, gt, res.weights)
    step = 1e-6
    for idx in [(0, 0, 0), (1, 2, 3), (2, 3, 1)]:
        bumped = hyps.copy()
        bumped[idx] += step
        f_plus = float(res.weights @ [l2_loss(h, gt) for h in bumped])
        bumped[idx] -= 2 * step
        f_minus = float(res.weights @ [l2_loss(h, gt) for h in bumped])
        assert grad[idx] == pytest.approx((f_plus - f_minus) / (2 * step), abs=1e-5)


def test_gt_selection():
    gts = [GraspRectangle(0, 0, 0, 2, 3), GraspRectangle(0, 0, 0, 3, 2), GraspRectangle(0, 0, 0, 1, 1)]
    assert select_gt_largest(gts) is gts[0]
    rng = np.random.default_rng(0)
    picks = {id(select_gt_random(gts, rng)) for _ in range(100)}
    assert picks == {id(g) for g in gts}
    with pytest.raises(EmptyGroundTruth):
        select_gt_largest([])
    with pytest.raises(EmptyGroundTruth):
        select_gt_random([], rng)


def test_dropout_rate_zero_is_identity():
    w = np.array([0.8, 0.1, 0.1])
    out = apply_hypothesis_dropout(w, 0.0, np.random.default_rng(0))
    np.testing.assert_array_equal(out, w)
    assert out is not w


@given(st.floats(0.0, 0.95), st.integers(0, 2**31 - 1))
def test_dropout_keeps_a_distribution(rate, seed):
    w = meta_loss_weights(5, 2, 0.05)
    out = apply_hypothesis_dropout(w, rate, np.random.default_rng(seed), winner=2)
    assert out.sum() == pytest.approx(1.0)
    assert np.all(out >= 0)


def test_dropout_frequency():
    rng = np.random.default_rng(3)
    w = np.full(5, 0.2)
    dropped = sum(np.count_nonzero(apply_hypothesis_dropout(w, 0.3, rng) == 0) for _ in range(2000))
    assert dropped / 10000 == pytest.approx(0.3, abs=0.02)
