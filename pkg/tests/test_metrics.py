import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polymeasure.geom import PolyClass, Polyline
from polymeasure.metrics import (
    ImageMatch,
    MatchConfig,
    PRCounts,
    _all_point_ap,
    average_precision,
    dice_iou,
    match_image,
    measurement_errors,
    precision_recall,
)

V, C = PolyClass.VILLI, PolyClass.CRYPT


def line(y, label=V, conf=1.0, x0=0.1, x1=0.4):
    return Polyline([(x0, y), (x1, y)], label, conf)


def test_match_examples():
    gts = [line(0.1), line(0.5, C)]
    m = match_image(list(gts), gts)
    assert m.counts[V] == [1, 0, 0] and m.counts[C] == [1, 0, 0]
    m = match_image([line(0.1, conf=0.9), line(0.101, conf=0.8)], [line(0.1)])
    assert m.counts[V] == [1, 1, 0] and m.pairs[0][:2] == (0, 0)
    # chamfer of a shift d is 2 d^2
    off = math.sqrt(0.06 / 2)
    m = match_image([line(0.1 + off)], [line(0.1)])
    assert m.counts[V] == [0, 1, 1]
    m = match_image([line(0.1, C)], [line(0.1)])
    assert m.counts[V] == [0, 0, 1] and m.counts[C] == [0, 1, 0]


def test_confidence_cutoff_ignores_low_scores():
    m = match_image([line(0.1, conf=0.3)], [line(0.1)])
    assert m.ignored == [0] and m.counts[V] == [0, 0, 1]
    m = match_image([line(0.1, conf=0.3)], [line(0.1)], apply_confidence=False)
    assert m.counts[V] == [1, 0, 0]


def test_threshold_validation():
    with pytest.raises(ValueError):
        MatchConfig(chamfer_threshold=0.0)
    with pytest.raises(ValueError):
        MatchConfig(confidence_threshold=1.0)


ys = st.lists(st.floats(0, 1), min_size=0, max_size=6)


@given(ys, ys, st.randoms())
def test_one_to_one_and_order_invariance(py, gy, rnd):
    preds = [line(y, V if k % 2 else C, 0.7) for k, y in enumerate(py)]
    gts = [line(y, V if k % 3 else C) for k, y in enumerate(gy)]
    m = match_image(preds, gts)
    for c in (V, C):
        tp, fp, fn = m.counts[c]
        assert tp <= min(sum(p.label is c for p in preds), sum(g.label is c for g in gts))
        assert tp + fn == sum(g.label is c for g in gts)
    shuffled = list(preds)
    rnd.shuffle(shuffled)
    assert match_image(shuffled, gts).counts == m.counts


def test_precision_recall_examples():
    m = ImageMatch(counts={V: [1, 1, 1], C: [0, 0, 0]})
    pr = precision_recall([m])
    assert (pr[V].precision, pr[V].recall) == (0.5, 0.5)
    assert (pr[C].precision, pr[C].recall) == (0.0, 0.0)
    assert PRCounts(3, 0, 0).precision == 1.0


def brute_ap(flags, n_gt):
    # step-wise sum over recall increments of the max precision at recall >= r
    prec, rec = [], []
    tp = 0
    for k, f in enumerate(flags, 1):
        tp += f
        prec.append(tp / k)
        rec.append(tp / n_gt)
    total, prev = 0.0, 0.0
    for k, r in enumerate(rec):
        if r > prev:
            total += (r - prev) * max(p for p, rr in zip(prec, rec) if rr >= r)
            prev = r
    return total


@given(st.lists(st.booleans(), min_size=1, max_size=12), st.integers(0, 4))
def test_all_point_ap_matches_hand_sweep(flags, extra):
    n_gt = sum(flags) + extra
    if n_gt == 0:
        return
    assert _all_point_ap(flags, n_gt) == pytest.approx(brute_ap(flags, n_gt), abs=1e-12)


def test_ap_examples():
    gts = [line(0.1)]
    r = average_precision([([line(0.1)], gts)])
    assert r.per_class[V] == 1.0 and r.per_class[C] is None and r.mean == 1.0
    preds = [line(0.8, conf=0.9), line(0.1, conf=0.6)]
    assert average_precision([(preds, gts)]).per_class[V] == 0.5


def test_measurement_examples():
    g = Polyline([(0, 0), (10, 0)])
    p = Polyline([(0, 0), (8, 0)])
    m = ImageMatch(pairs=[(0, 0, 0.0)], counts={V: [1, 0, 0], C: [0, 0, 0]})
    e = measurement_errors([("a", [p], [g], m)])
    assert e.mae[V] == 2.0 and e.mre[V] == 20.0 and e.ratio_excluded == 1
    gts = [Polyline([(0, 0), (20, 0)]), Polyline([(0, 5), (10, 5)], C)]
    preds = [Polyline([(0, 0), (15, 0)]), Polyline([(0, 5), (10, 5)], C)]
    m = ImageMatch(pairs=[(0, 0, 0.0), (1, 1, 0.0)], counts={V: [1, 0, 0], C: [1, 0, 0]})
    e = measurement_errors([("b", preds, gts, m)])
    assert e.mae_ratio == 0.5 and e.mre_ratio == 25.0


def test_dice_iou_examples():
    a = np.zeros((4, 4), int)
    a[0, :4] = 1
    assert dice_iou(a, a, 1) == (1.0, 1.0)
    assert dice_iou(a, np.roll(a, 1, axis=0), 1) == (0.0, 0.0)
    b = np.zeros((4, 4), int)
    b[0, 2:4] = 1
    b[1, 0:2] = 1
    assert dice_iou(a, b, 1) == (0.5, pytest.approx(1 / 3))
    assert dice_iou(np.zeros((2, 2)), np.zeros((2, 2)), 1) == (1.0, 1.0)
    with pytest.raises(ValueError):
        dice_iou(np.zeros((2, 2)), np.zeros((3, 2)), 1)


@given(st.integers(0, 2**20), st.integers(0, 2**20))
def test_dice_iou_relation(x, y):
    a = np.array([(x >> k) & 1 for k in range(20)])
    b = np.array([(y >> k) & 1 for k in range(20)])
    d, i = dice_iou(a, b, 1)
    assert d >= i
    assert d == pytest.approx(2 * i / (1 + i), abs=1e-15)
