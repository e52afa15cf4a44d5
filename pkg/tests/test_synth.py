import math

import numpy as np
import pytest

from polymeasure.geom import PolyClass, polyline_length
from polymeasure.grading import Marsh, grade
from polymeasure.maskmeasure import BORDER, CRYPT, SHOULDER, VILLI
from polymeasure.synth import SynthConfig, arc_points, synth_generate, write_synth


def gt_ratio(rec):
    v = [polyline_length(p) for p in rec.of_class(PolyClass.VILLI)]
    c = [polyline_length(p) for p in rec.of_class(PolyClass.CRYPT)]
    return (math.fsum(v) / len(v)) / (math.fsum(c) / len(c))


def test_arc_length_exact():
    pts = arc_points((100, 100), 80.0, 0.7, 0.3)
    assert polyline_length(pts) == pytest.approx(80.0, rel=1e-12)


def test_noiseless_predictions_equal_gt():
    r = synth_generate(SynthConfig(n_images=5, seed=3, write_masks=False))
    for g, p in zip(r.gt, r.pred):
        assert [q.points for q in p.polylines] == [q.points for q in g.polylines]


def test_same_seed_identical(tmp_path):
    cfg = SynthConfig(n_images=4, seed=9, noise_sigma=1.0, drop_rate=0.2, spurious_rate=1.0)
    write_synth(synth_generate(cfg), tmp_path / "a", cfg)
    write_synth(synth_generate(cfg), tmp_path / "b", cfg)
    for f in sorted((tmp_path / "a").rglob("*")):
        if f.is_file():
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()
    other = synth_generate(SynthConfig(n_images=4, seed=10))
    assert other.gt[0] != synth_generate(cfg).gt[0]


def test_ratio_band_grades_marsh2():
    r = synth_generate(SynthConfig(n_images=20, seed=1, ratio_band=(0.95, 1.05), write_masks=False))
    for rec, target in zip(r.gt, r.target_ratios):
        ratio = gt_ratio(rec)
        assert ratio == pytest.approx(target, rel=1e-12)
        assert grade(ratio).marsh is Marsh.MARSH2


def test_default_bands_span_all_grades():
    r = synth_generate(SynthConfig(n_images=60, seed=0, write_masks=False))
    grades = {grade(gt_ratio(rec)).marsh for rec in r.gt}
    assert grades == set(Marsh)
    villi = np.mean([polyline_length(p) for rec in r.gt for p in rec.of_class(PolyClass.VILLI)])
    crypt = np.mean([polyline_length(p) for rec in r.gt for p in rec.of_class(PolyClass.CRYPT)])
    assert villi > crypt


def test_geometry_inside_image_and_layered():
    r = synth_generate(SynthConfig(n_images=10, seed=2))
    for rec, m in zip(r.gt, r.gt_masks):
        for p in rec.polylines:
            assert np.all((p.xy >= 0) & (p.xy <= [rec.width, rec.height]))
        rows = {lab: np.nonzero(m.labels == lab)[0] for lab in (VILLI, CRYPT, SHOULDER, BORDER)}
        assert all(len(v) for v in rows.values())
        assert rows[VILLI].mean() < rows[SHOULDER].mean() < rows[CRYPT].mean() < rows[BORDER].mean()


def test_drop_and_spurious_counts():
    r = synth_generate(SynthConfig(n_images=40, seed=4, drop_rate=0.5, spurious_rate=2.0, write_masks=False))
    n_gt = sum(len(g.polylines) for g in r.gt)
    kept = sum(len(p) for p in r.pairs)
    extra = sum(len(p.polylines) for p in r.pred) - kept
    assert abs(kept / n_gt - 0.5) < 0.1
    assert 40 <= extra <= 130


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        SynthConfig(drop_rate=1.0)
    with pytest.raises(ValueError):
        SynthConfig(noise_sigma=-1)
    f = tmp_path / "c.json"
    f.write_text('{"n_images": 2, "villi_per_image": [1, 2]}')
    assert SynthConfig.from_json(f).villi_per_image == (1, 2)
