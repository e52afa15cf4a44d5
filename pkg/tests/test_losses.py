import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polymeasure.geom import chamfer_distance, polyline_length
from polymeasure.losses import (
    OPS,
    FocalParams,
    LossWeights,
    chamfer_loss,
    combine_losses,
    cross_entropy_loss,
    dice_loss,
    dtw_loss,
    focal_loss,
    gradcheck,
    length_loss,
    loc_loss,
    part_length_loss,
    segmentation_loss,
    total_detection_loss,
    LossValue,
)
from polymeasure.rng import make_generator
from oracles import brute_dtw, finite_difference

coord = st.floats(-50, 50, allow_nan=False)
tri = st.lists(st.tuples(coord, coord), min_size=3, max_size=3)


def test_loc_examples():
    assert loc_loss([(0, 0), (1, 1), (2, 2)], [(0, 0), (1, 1), (2, 2)]).value == 0.0
    assert loc_loss([(0.5, 0), (1, 1), (2, 1.5)], [(0, 0), (1, 1), (2, 2)]).value == 1.0
    lv = loc_loss([(1, 1)] * 3, [(0, 0)] * 3)
    assert lv.value == 6.0 and list(lv.gradient) == [1.0] * 6
    assert list(loc_loss([(0, 0)] * 3, [(0, 0)] * 3).gradient) == [0.0] * 6


def test_chamfer_examples():
    a = [(0, 0), (1, 0), (2, 0)]
    lv = chamfer_loss(a, a)
    assert lv.value == 0.0 and not lv.gradient.any()
    assert chamfer_loss(a, [(0, 1), (1, 1), (2, 1)]).value == 2.0


@given(tri, tri)
def test_chamfer_loss_equals_distance(p, g):
    assert chamfer_loss(p, g).value == pytest.approx(chamfer_distance(p, g), rel=1e-12, abs=1e-12)


def test_focal_examples():
    assert focal_loss(1, 1.0).value == pytest.approx(0.0, abs=1e-20)
    assert focal_loss(1, 0.5).value == pytest.approx(0.25 * 0.25 * math.log(2), abs=1e-15)
    assert focal_loss(1, 0.5).value == pytest.approx(0.0433217, abs=5e-8)
    assert focal_loss(0, 0.5).value == pytest.approx(0.75 * 0.25 * math.log(2), abs=1e-15)
    assert FocalParams() == FocalParams(0.25, 2.0)
    with pytest.raises(ValueError):
        focal_loss(2, 0.5)


@given(st.floats(1e-6, 1 - 1e-6), st.floats(1e-6, 1 - 1e-6))
def test_focal_monotone_for_positive(a, b):
    lo, hi = sorted((a, b))
    assert focal_loss(1, lo).value >= focal_loss(1, hi).value


def test_focal_saturated_inputs_finite():
    lv = focal_loss([1, 0], [0.0, 1.0])
    assert math.isfinite(lv.value) and list(lv.gradient) == [0.0, 0.0]


def test_length_examples():
    assert length_loss([(0, 0), (0, 5), (0, 10)], [(0, 0), (6, 8), (6, 8)]).value == 0.0
    assert length_loss([(0, 0), (4, 0), (8, 0)], [(0, 0), (3, 4), (3, 10)]).value == 3.0


def test_part_length_examples():
    g = [(0, 0), (1, 0), (1, 1)]
    assert part_length_loss(g, g).value == 0.0
    assert part_length_loss([(0, 0), (2, 0), (2, 2)], g).value == 2.0
    assert part_length_loss([(0, 0), (2, 0), (2, 2)], g, squared=True).value == 6.0
    sym = [(0, 0), (1, 1), (2, 0)]
    assert part_length_loss(sym[::-1], g).value == part_length_loss(sym, g).value


def test_total_detection_loss_composition():
    gt = [(0, 0), (1, 1), (2, 2)]
    assert total_detection_loss(gt, gt, [1], [1.0]).value == pytest.approx(0.0, abs=1e-20)
    pred = [(0.5, 0), (1, 3), (2, 1.5)]
    lv = total_detection_loss(pred, gt, [1, 0], [0.5, 0.2])
    parts = [loc_loss(pred, gt), chamfer_loss(pred, gt), length_loss(pred, gt), part_length_loss(pred, gt)]
    fl = focal_loss([1, 0], [0.5, 0.2])
    assert abs(lv.value - (sum(p.value for p in parts) + fl.value)) <= 1e-12
    assert lv.gradient.shape == (8,)
    np.testing.assert_allclose(lv.gradient[:6], sum(p.gradient for p in parts), atol=1e-12)
    only_loc = total_detection_loss(pred, gt, [1], [0.5], LossWeights(1, 0, 0, 0, 0))
    assert only_loc.value == loc_loss(pred, gt).value


@given(tri, tri, st.floats(0.01, 0.99))
def test_total_equals_sum_of_components(p, g, yh):
    lv = total_detection_loss(p, g, [1], [yh])
    assert abs(lv.value - math.fsum(lv.components.values())) <= 1e-12 * max(1.0, lv.value)


@given(tri, tri)
def test_polyline_losses_nonnegative_and_zero_at_gt(p, g):
    for fn in (loc_loss, chamfer_loss, length_loss, part_length_loss):
        assert fn(p, g).value >= 0
        assert fn(g, g).value == 0.0


def test_dice_examples():
    m = np.array([[1, 1], [0, 0]], float)
    assert dice_loss(m, m).value == pytest.approx(0.0, abs=1e-6)
    assert dice_loss(np.zeros((2, 2)), m).value == pytest.approx(1.0, abs=1e-6)
    p = np.array([1, 1, 1, 1, 0, 0], float)
    q = np.array([0, 0, 1, 1, 1, 1], float)
    assert dice_loss(p, q).value == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(ValueError):
        dice_loss(np.zeros(3), np.zeros(4))


def test_cross_entropy_examples():
    labels = np.array([[0, 1], [2, 4]])
    onehot = np.moveaxis(np.eye(5)[labels], -1, 0)
    assert cross_entropy_loss(onehot, labels).value == 0.0
    assert cross_entropy_loss(np.full((5, 2, 2), 0.2), labels).value == pytest.approx(math.log(5), abs=1e-12)
    single = np.array([0.25, 0.75]).reshape(2, 1, 1)
    assert cross_entropy_loss(single, np.array([[0]])).value == pytest.approx(math.log(4), abs=1e-12)
    with pytest.raises(ValueError):
        cross_entropy_loss(np.full((2, 1, 1), 0.4), np.array([[0]]))


def test_dtw_loss_examples():
    a = [(0, 0), (3, 1), (5, 5)]
    assert dtw_loss(a, a).value == 0.0
    b = [(0, 0), (1, 0), (2, 0)]
    assert dtw_loss([(0, 0), (2, 0)], b).value == pytest.approx(brute_dtw([(0, 0), (2, 0)], b) / 5)
    assert dtw_loss(a[::-1], b[::-1]).value == pytest.approx(dtw_loss(a, b).value)


def test_segmentation_composition():
    labels = np.array([[0, 1], [2, 1]])
    probs = np.moveaxis(np.eye(3)[labels], -1, 0)
    lv = segmentation_loss(probs, labels, ([(0, 0), (1, 0)], [(0, 0), (1, 0)]))
    assert lv.value == pytest.approx(0.0, abs=1e-6) and not lv.partial
    lv = segmentation_loss(probs, labels)
    assert lv.partial and set(lv.components) == {"dice", "ce"}
    terms = {"dice": LossValue(0.5, np.zeros(1)), "ce": LossValue(1.38629, np.zeros(1)),
             "dtw": LossValue(0.2, np.zeros(2))}
    assert combine_losses(terms, ("dice", "ce")).value == pytest.approx(2.08629, abs=1e-12)


@pytest.mark.parametrize("op", list(OPS))
def test_gradcheck_passes(op):
    r = gradcheck(op, trials=100, rng=make_generator(7))
    assert r.passed and r.instances_checked >= 90, r


def test_gradcheck_skips_identical_chamfer():
    inst = {"x": np.array([0, 0, 1, 0, 2, 0.0]), "gt": np.array([[0, 0], [1, 0], [2, 0.0]])}
    r = gradcheck("chamfer", instances=[inst])
    assert r.checked == 0 and r.skipped == 6 and not r.passed
    with pytest.raises(ValueError):
        gradcheck("loc", trials=0)


@settings(max_examples=50)
@given(tri, tri)
def test_length_gradient_against_independent_differences(p, g):
    flat = [c for pt in p for c in pt]

    def f(x):
        return abs(polyline_length(g) - polyline_length(np.reshape(x, (3, 2))))

    segs = np.hypot(*np.diff(np.array(p), axis=0).T)
    if segs.min() < 1e-2 or abs(f(flat)) < 1e-2:
        return
    num = finite_difference(f, flat, 1e-6)
    np.testing.assert_allclose(length_loss(p, g).gradient, num, rtol=1e-4, atol=1e-4)
