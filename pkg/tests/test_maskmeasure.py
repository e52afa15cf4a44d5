import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polymeasure.dtw import dtw_align
from polymeasure.grading import Marsh, grade
from polymeasure.maskmeasure import (
    BORDER,
    CRYPT,
    SHOULDER,
    VILLI,
    LabelMap,
    connected_components,
    crypt_depth_profile,
    extract_class_contour,
    measure_masks,
    read_pgm,
    skeleton_length,
    skeletonize,
    write_pgm,
    zhang_suen,
)
from polymeasure.rng import make_generator
from oracles import zhang_suen_reference


def raster(h, w):
    return np.zeros((h, w), dtype=np.uint8)


def test_label_map_validation():
    with pytest.raises(ValueError):
        LabelMap(np.full((2, 2), 7, dtype=np.uint8))
    with pytest.raises(ValueError):
        LabelMap(np.zeros((0, 3), dtype=np.uint8))


def test_components_examples():
    assert connected_components(LabelMap(raster(5, 5)), VILLI) == []
    r = raster(10, 10)
    r[0:3, 0:3] = VILLI
    r[5:8, 5:8] = VILLI
    comps = connected_components(LabelMap(r), VILLI, min_area=1)
    assert [len(c) for c in comps] == [9, 9]
    assert connected_components(LabelMap(r), VILLI) == []  # both below the default 20 px
    r[3:5, 3:5] = 0
    r[3, 3] = VILLI
    r[4, 4] = VILLI
    assert len(connected_components(LabelMap(r), VILLI, min_area=1)) == 1


def test_components_diagonal_touch():
    r = raster(6, 6)
    r[0:3, 0:3] = CRYPT
    r[3:6, 3:6] = CRYPT
    assert [len(c) for c in connected_components(LabelMap(r), CRYPT, min_area=1)] == [18]


def test_components_match_scipy_label_count():
    from scipy import ndimage

    rng = make_generator(9)
    r = (rng.random((30, 30)) < 0.3).astype(np.uint8)
    _, n = ndimage.label(r, structure=np.ones((3, 3)))
    comps = connected_components(LabelMap(r), 1, min_area=1)
    assert len(comps) == n and sum(map(len, comps)) == r.sum()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 16), st.integers(3, 16))
def test_zhang_suen_matches_textbook_loop(seed, h, w):
    rng = make_generator(seed)
    img = rng.random((h, w)) < 0.6
    assert np.array_equal(zhang_suen(img), np.array(zhang_suen_reference(img.astype(int)), bool))


def test_skeleton_examples():
    bar = np.argwhere(np.ones((1, 10)))
    c = skeletonize(bar)
    assert len(c) == 10 and np.all(c.points[:, 1] == 0)
    assert skeleton_length(c) == 9.0
    assert len(skeletonize(np.array([[4, 7]]))) == 1
    assert skeleton_length([(0, 0), (1, 1), (2, 2)]) == pytest.approx(2 * math.sqrt(2))
    assert skeleton_length([(3, 3)]) == 0.0


def test_thick_bar_thins_to_middle_row():
    thick = np.argwhere(np.ones((3, 10)))
    c = skeletonize(thick)
    expected = np.argwhere(np.array(zhang_suen_reference(np.ones((3, 10), int))))
    assert np.all(c.points[:, 1] == 1)
    assert len(c) == len(expected) == 7


def test_u_shape_gives_single_ordered_contour():
    r = raster(20, 20)
    r[2:17, 3] = BORDER
    r[16, 3:15] = BORDER
    r[2:17, 14] = BORDER
    c = extract_class_contour(LabelMap(r), BORDER)
    steps = np.abs(np.diff(c.points, axis=0)).max(axis=1)
    assert np.all(steps == 1)
    assert tuple(c.points[0]) == (3.0, 2.0) and tuple(c.points[-1]) == (14.0, 2.0)
    assert len(c) == 15 + 10 + 15


def test_extract_absent_and_horizontal():
    r = raster(5, 12)
    assert extract_class_contour(LabelMap(r), BORDER).missing
    r[2, 1:11] = SHOULDER
    c = extract_class_contour(LabelMap(r), SHOULDER)
    assert c.points[:, 0].tolist() == list(range(1, 11)) and not c.missing


@given(st.integers(0, 30), st.integers(0, 30))
def test_skeleton_length_translation_invariant(dy, dx):
    r = raster(60, 60)
    r[5:8, 5:25] = VILLI
    r[8:20, 22:25] = VILLI
    base = measure_masks(LabelMap(r)).villi_lengths
    moved = np.roll(np.roll(r, dy, 0), dx, 1)
    assert measure_masks(LabelMap(moved)).villi_lengths == base


@given(st.integers(2, 60))
def test_one_pixel_bar_length(n):
    r = raster(3, 64)
    r[1, :n] = VILLI
    assert measure_masks(LabelMap(r), min_area=1).villi_lengths == [n - 1]


def test_depth_examples():
    a = [(x, 0.0) for x in range(10)]
    b = [(x, 5.0) for x in range(10)]
    assert [s.depth for s in crypt_depth_profile(a, b)] == [5.0] * 10
    assert [s.depth for s in crypt_depth_profile(a, a)] == [0.0] * 10
    assert len(crypt_depth_profile([(0, 0), (4, 0)], [(0, 3), (2, 3), (4, 3)])) == 2
    with pytest.raises(ValueError):
        crypt_depth_profile([], a)


@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), min_size=1, max_size=6), st.data())
def test_depth_swap_symmetry_on_one_to_one_alignment(s, data):
    b = data.draw(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), min_size=len(s), max_size=len(s)))
    d1 = sorted(x.depth for x in crypt_depth_profile(s, b))
    assert len(d1) == len(s) and all(x >= 0 for x in d1)
    if dtw_align(s, b)[1] == [(i, i) for i in range(len(s))]:
        assert d1 == sorted(x.depth for x in crypt_depth_profile(b, s))


def bar_fixture():
    r = raster(12, 60)
    r[2, 5:55] = VILLI
    r[8, 5:30] = CRYPT
    return r


def test_measure_fixture_lengths():
    m = measure_masks(LabelMap(bar_fixture()))
    assert m.villi_lengths == [49.0] and m.crypt_lengths == [24.0]
    assert m.ratio == pytest.approx(49 / 24)
    assert grade(m.ratio).marsh is Marsh.MARSH1
    assert m.crypt_depth is None


def test_measure_depth_fixture():
    r = raster(30, 40)
    r[5, 5:35] = SHOULDER
    r[17, 5:35] = BORDER
    assert measure_masks(LabelMap(r)).crypt_depth == 12.0


def test_measure_no_crypt():
    r = raster(5, 40)
    r[1, 2:30] = VILLI
    m = measure_masks(LabelMap(r))
    assert m.crypt_lengths == [] and m.ratio is None


def test_measure_union_of_disjoint_rasters():
    a = bar_fixture()
    b = raster(12, 60)
    b[4, 10:40] = VILLI
    b[10, 3:33] = CRYPT
    union = np.concatenate([a, b])
    ma, mb, mu = (measure_masks(LabelMap(x)) for x in (a, b, union))
    assert sorted(mu.villi_lengths) == sorted(ma.villi_lengths + mb.villi_lengths)
    assert sorted(mu.crypt_lengths) == sorted(ma.crypt_lengths + mb.crypt_lengths)


def test_pgm_round_trip(tmp_path):
    m = LabelMap(bar_fixture())
    write_pgm(tmp_path / "m.pgm", m)
    assert np.array_equal(read_pgm(tmp_path / "m.pgm").labels, m.labels)
    (tmp_path / "c.pgm").write_bytes(b"P5\n# comment\n3 2\n255\n" + bytes([0, 1, 2, 3, 4, 0]))
    assert read_pgm(tmp_path / "c.pgm").labels.tolist() == [[0, 1, 2], [3, 4, 0]]
    (tmp_path / "bad.pgm").write_bytes(b"P5\n3 2\n255\n" + bytes([0, 9, 2, 3, 4, 0]))
    with pytest.raises(ValueError):
        read_pgm(tmp_path / "bad.pgm")
    (tmp_path / "short.pgm").write_bytes(b"P5\n3 2\n255\n" + bytes([0]))
    with pytest.raises(ValueError):
        read_pgm(tmp_path / "short.pgm")
