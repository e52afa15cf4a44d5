"""Synthetic biopsy-like fixtures in the annotation schema.

Each image gets a wavy villi-shoulder curve and a parallel crypt-border curve
below it.  Crypts are near-vertical 3-point arcs in the band between the two
curves; villi are longer arcs rising above the shoulder.  Villi lengths are
scaled so the image's mean-villi / mean-crypt ratio equals a target drawn from
one of the four grading bands.  Predictions are the ground truth with Gaussian
coordinate noise, random drops and optional spurious detections.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .geom import PolyClass, Polyline
from .maskmeasure import BORDER, CRYPT, SHOULDER, VILLI, LabelMap, write_pgm
from .records import ImageRecord, write_records
from .rng import spawn_generators

# Ratio bands kept clear of the grading edges (3, 1.05, 0.95).
RATIO_BANDS = ((3.2, 4.5), (1.15, 2.9), (0.96, 1.04), (0.45, 0.9))
STRIP_HALF_WIDTH = 3.0
CLEARANCE = 10.0


@dataclass
class SynthConfig:
    n_images: int = 50
    villi_per_image: tuple[int, int] = (2, 4)
    crypts_per_image: tuple[int, int] = (3, 6)
    noise_sigma: float = 0.0
    drop_rate: float = 0.0
    spurious_rate: float = 0.0
    seed: int = 0
    width: int = 640
    height: int = 640
    crypt_length: tuple[float, float] = (25.0, 50.0)
    max_bend: float = 0.35
    ratio_band: Optional[tuple[float, float]] = None
    write_masks: bool = True

    def __post_init__(self):
        self.villi_per_image = tuple(self.villi_per_image)
        self.crypts_per_image = tuple(self.crypts_per_image)
        self.crypt_length = tuple(self.crypt_length)
        if self.ratio_band is not None:
            self.ratio_band = tuple(self.ratio_band)
        if self.n_images < 0:
            raise ValueError("n_images must be >= 0")
        for name in ("villi_per_image", "crypts_per_image"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ValueError(f"{name} must be a range 0 <= lo <= hi, got {(lo, hi)}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0.0 <= self.drop_rate < 1.0:
            raise ValueError("drop_rate must be in [0, 1)")
        if self.spurious_rate < 0:
            raise ValueError("spurious_rate must be >= 0")

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "SynthConfig":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class SynthResult:
    gt: list = field(default_factory=list)  # ImageRecord
    pred: list = field(default_factory=list)  # ImageRecord
    gt_masks: list = field(default_factory=list)  # LabelMap
    pred_masks: list = field(default_factory=list)
    pairs: list = field(default_factory=list)  # per image: [(pred index, gt index)]
    target_ratios: list = field(default_factory=list)


def arc_points(center, length: float, angle: float, bend: float) -> np.ndarray:
    """3-point arc of total polyline length ``length``; ``bend`` is the sagitta
    as a fraction of the half chord."""
    chord = length / math.sqrt(1.0 + bend * bend)
    local = np.array([[-chord / 2, 0.0], [0.0, bend * chord / 2], [chord / 2, 0.0]])
    c, s = math.cos(angle), math.sin(angle)
    return local @ np.array([[c, s], [-s, c]]) + np.asarray(center, dtype=float)


def _dense(pts: np.ndarray, step: float = 2.0) -> np.ndarray:
    out = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, int(math.ceil(np.hypot(*(b - a)) / step)))
        t = np.arange(1, n + 1)[:, None] / n
        out.append(a + t * (b - a))
    return np.concatenate(out)


def _place(rng, length, region, angle_mid, angle_spread, others, max_bend, tries=200):
    x0, y0, x1, y1 = region
    fallback = None
    for _ in range(tries):
        angle = angle_mid + rng.uniform(-angle_spread, angle_spread)
        bend = rng.uniform(-max_bend, max_bend)
        center = (rng.uniform(x0, x1), rng.uniform(y0, y1))
        pts = arc_points(center, length, angle, bend)
        if pts[:, 0].min() < x0 or pts[:, 0].max() > x1 or pts[:, 1].min() < y0 or pts[:, 1].max() > y1:
            continue
        fallback = pts
        dense = _dense(pts)
        if all(np.sqrt(((dense[:, None] - o[None]) ** 2).sum(-1)).min() >= CLEARANCE for o in others):
            return pts
    if fallback is None and angle_spread < math.pi / 2:
        return _place(rng, length, region, angle_mid, math.pi / 2, others, max_bend, tries)
    if fallback is None:
        # Region too small for this length at any angle: straight arc, clipped span.
        cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
        span = min(length, 0.9 * math.hypot(x1 - x0, y1 - y0))
        fallback = arc_points((cx, cy), span, angle_mid, 0.0)
    return fallback


def rasterize_polyline(labels: np.ndarray, pts, label: int, half_width: float) -> None:
    """Paint every pixel whose centre lies within ``half_width`` of the polyline.

    ``half_width == 0`` draws an 8-connected one-pixel line.
    """
    pts = np.asarray(pts, dtype=float)
    h, w = labels.shape
    if half_width <= 0:
        dense = np.rint(_dense(pts, 0.25)).astype(int)
        ok = (dense[:, 0] >= 0) & (dense[:, 0] < w) & (dense[:, 1] >= 0) & (dense[:, 1] < h)
        labels[dense[ok, 1], dense[ok, 0]] = label
        return
    for a, b in zip(pts[:-1], pts[1:]):
        lo = np.floor(np.minimum(a, b) - half_width).astype(int)
        hi = np.ceil(np.maximum(a, b) + half_width).astype(int)
        xs = np.arange(max(lo[0], 0), min(hi[0], w - 1) + 1)
        ys = np.arange(max(lo[1], 0), min(hi[1], h - 1) + 1)
        if xs.size == 0 or ys.size == 0:
            continue
        gx, gy = np.meshgrid(xs, ys)
        d = b - a
        denom = float(d @ d)
        t = np.zeros_like(gx, dtype=float) if denom == 0 else ((gx - a[0]) * d[0] + (gy - a[1]) * d[1]) / denom
        t = np.clip(t, 0.0, 1.0)
        dist2 = (gx - a[0] - t * d[0]) ** 2 + (gy - a[1] - t * d[1]) ** 2
        sel = dist2 <= half_width**2
        labels[gy[sel], gx[sel]] = label


def render_label_map(rec: ImageRecord, confidence_threshold: float = 0.0) -> LabelMap:
    labels = np.zeros((rec.height, rec.width), dtype=np.uint8)
    for cls, value in ((PolyClass.VILLI, VILLI), (PolyClass.CRYPT, CRYPT)):
        for p in rec.of_class(cls):
            if p.confidence >= confidence_threshold:
                rasterize_polyline(labels, p.xy, value, STRIP_HALF_WIDTH)
    for curve, value in ((rec.shoulder, SHOULDER), (rec.border, BORDER)):
        if curve is not None:
            rasterize_polyline(labels, curve, value, 0.0)
    return LabelMap(labels)


def _image(cfg: SynthConfig, index: int, rng: np.random.Generator):
    W, H = cfg.width, cfg.height
    band = cfg.ratio_band or RATIO_BANDS[int(rng.integers(len(RATIO_BANDS)))]
    lo, hi = band
    pad = 0.02 * (hi - lo)
    ratio = float(rng.uniform(lo + pad, hi - pad))

    n_villi = int(rng.integers(cfg.villi_per_image[0], cfg.villi_per_image[1] + 1))
    n_crypt = int(rng.integers(cfg.crypts_per_image[0], cfg.crypts_per_image[1] + 1))
    base = rng.uniform(*cfg.crypt_length)
    crypt_len = base * rng.uniform(0.85, 1.15, n_crypt)
    villi_len = base * rng.uniform(0.85, 1.15, n_villi)
    if n_villi and n_crypt:
        villi_len *= ratio * crypt_len.mean() / villi_len.mean()
    else:
        villi_len *= ratio

    # Shoulder and border: parallel waves; the crypt band sits between them.
    depth = (crypt_len.max() if n_crypt else base) + 2 * CLEARANCE
    y_s = rng.uniform(0.55, 0.62) * H
    amp, period, phase = rng.uniform(0, 6), rng.uniform(250, 450), rng.uniform(0, 2 * math.pi)
    xs = np.arange(8.0, W - 7.0, 16.0)
    wave = amp * np.sin(2 * math.pi * xs / period + phase)
    shoulder = np.column_stack([xs, y_s + wave])
    border = np.column_stack([xs, y_s + depth + wave])

    placed, polylines = [], []
    crypt_region = (12.0, y_s + amp + 4, W - 12.0, y_s + depth - amp - 4)
    villi_region = (12.0, 12.0, W - 12.0, y_s - amp - 6)
    for length in crypt_len:
        pts = _place(rng, length, crypt_region, math.pi / 2, 0.3, placed, cfg.max_bend)
        placed.append(_dense(pts))
        polylines.append(Polyline(pts, PolyClass.CRYPT))
    for length in villi_len:
        pts = _place(rng, length, villi_region, math.pi / 2, 0.5, placed, cfg.max_bend)
        placed.append(_dense(pts))
        polylines.append(Polyline(pts, PolyClass.VILLI))
    gt = ImageRecord(f"img-{index:05d}", W, H, tuple(polylines), tuple(map(tuple, shoulder)), tuple(map(tuple, border)))

    # Draws are made for every instance so the stream layout does not depend on the rates.
    keep = rng.uniform(size=len(polylines)) >= cfg.drop_rate
    noise = rng.normal(size=(len(polylines), 3, 2)) * cfg.noise_sigma
    conf = rng.uniform(0.55, 1.0, len(polylines))
    preds, pairs = [], []
    for g, p in enumerate(polylines):
        if keep[g]:
            pts = np.clip(p.xy + noise[g], 0.0, [W, H])
            pairs.append((len(preds), g))
            preds.append(Polyline(pts, p.label, float(conf[g])))
    for _ in range(int(rng.poisson(cfg.spurious_rate))):
        label = PolyClass.VILLI if rng.uniform() < 0.5 else PolyClass.CRYPT
        pts = arc_points(
            (rng.uniform(0.2, 0.8) * W, rng.uniform(0.2, 0.8) * H),
            rng.uniform(20, 150), rng.uniform(0, 2 * math.pi), rng.uniform(-cfg.max_bend, cfg.max_bend),
        )
        preds.append(Polyline(np.clip(pts, 0.0, [W, H]), label, float(rng.uniform(0.55, 1.0))))
    pred = ImageRecord(gt.id, W, H, tuple(preds), gt.shoulder, gt.border)
    return gt, pred, pairs, ratio


def synth_generate(cfg: SynthConfig) -> SynthResult:
    """Deterministic fixtures: image ``i`` uses its own child stream of ``cfg.seed``."""
    out = SynthResult()
    for i, rng in enumerate(spawn_generators(cfg.seed, cfg.n_images)):
        gt, pred, pairs, ratio = _image(cfg, i, rng)
        out.gt.append(gt)
        out.pred.append(pred)
        out.pairs.append(pairs)
        out.target_ratios.append(ratio)
        if cfg.write_masks:
            out.gt_masks.append(render_label_map(gt))
            out.pred_masks.append(render_label_map(pred, confidence_threshold=0.5))
    return out


def write_synth(result: SynthResult, out_dir: Union[str, Path], cfg: Optional[SynthConfig] = None) -> None:
    """Write ``gt.jsonl``, ``pred.jsonl``, ``truth.json`` and ``masks/{gt,pred}/<id>.pgm``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_records(out / "gt.jsonl", result.gt)
    write_records(out / "pred.jsonl", result.pred)
    truth = {
        "config": asdict(cfg) if cfg is not None else None,
        "images": [
            {"id": g.id, "target_ratio": r, "pairs": [list(p) for p in pairs]}
            for g, r, pairs in zip(result.gt, result.target_ratios, result.pairs)
        ],
    }
    (out / "truth.json").write_text(json.dumps(truth, indent=1) + "\n", encoding="utf-8")
    for kind, masks in (("gt", result.gt_masks), ("pred", result.pred_masks)):
        if masks:
            d = out / "masks" / kind
            d.mkdir(parents=True, exist_ok=True)
            for rec, m in zip(result.gt, masks):
                write_pgm(d / f"{rec.id}.pgm", m)
