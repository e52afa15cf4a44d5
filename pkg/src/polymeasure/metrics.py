"""Detection, measurement and segmentation metrics.

A prediction is a true positive when its chamfer distance to an unmatched
ground-truth polyline of the same class, in ``[0, 1]``-normalized coordinates,
is below ``chamfer_threshold``.  Reductions use ``math.fsum`` so results do not
depend on summation order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geom import (
    DistanceKind,
    PolyClass,
    Polyline,
    ResamplePolicy,
    chamfer_distance,
    emd_distance,
    polyline_length,
    resample_to_three,
)

CLASSES = (PolyClass.VILLI, PolyClass.CRYPT)


@dataclass(frozen=True)
class MatchConfig:
    chamfer_threshold: float = 0.05
    confidence_threshold: float = 0.5
    distance: DistanceKind = DistanceKind.CHAMFER

    def __post_init__(self):
        for name in ("chamfer_threshold", "confidence_threshold"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {v}")
        object.__setattr__(self, "distance", DistanceKind(self.distance))


def polyline_distance(a: Polyline, b: Polyline, kind: DistanceKind = DistanceKind.CHAMFER) -> float:
    if DistanceKind(kind) is DistanceKind.CHAMFER:
        return chamfer_distance(a, b)
    policy = ResamplePolicy.DUPLICATE_ENDPOINT
    return emd_distance(resample_to_three(a, policy), resample_to_three(b, policy))


@dataclass
class ImageMatch:
    """Result of matching one image.  Indices refer to the input lists."""

    pairs: list = field(default_factory=list)  # (pred index, gt index, distance)
    false_positives: list = field(default_factory=list)
    false_negatives: list = field(default_factory=list)
    ignored: list = field(default_factory=list)  # below the confidence threshold
    counts: dict = field(default_factory=dict)  # PolyClass -> [tp, fp, fn]


def match_image(
    preds: Sequence[Polyline],
    gts: Sequence[Polyline],
    cfg: MatchConfig = MatchConfig(),
    apply_confidence: bool = True,
) -> ImageMatch:
    """Greedy one-to-one matching, highest confidence first.

    Each prediction takes the nearest still-unmatched ground truth of its class
    (lowest index on ties) if the distance is below the threshold.  Predictions
    with equal confidence are visited in (label, points) order, so shuffling the
    input cannot change the counts.
    """
    out = ImageMatch(counts={c: [0, 0, 0] for c in CLASSES})
    order = sorted(range(len(preds)), key=lambda k: (-preds[k].confidence, preds[k].label.value, preds[k].points))
    free = set(range(len(gts)))
    for k in order:
        p = preds[k]
        if apply_confidence and p.confidence < cfg.confidence_threshold:
            out.ignored.append(k)
            continue
        best, best_d = None, math.inf
        for g in sorted(free):
            if gts[g].label != p.label:
                continue
            d = polyline_distance(p, gts[g], cfg.distance)
            if d < cfg.chamfer_threshold and d < best_d:
                best, best_d = g, d
        if best is None:
            out.false_positives.append(k)
            out.counts[p.label][1] += 1
        else:
            free.discard(best)
            out.pairs.append((k, best, best_d))
            out.counts[p.label][0] += 1
    for g in sorted(free):
        out.false_negatives.append(g)
        out.counts[gts[g].label][2] += 1
    return out


@dataclass(frozen=True)
class PRCounts:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0


def precision_recall(matches: Sequence[ImageMatch]) -> dict:
    """Pool TP/FP/FN over images per class."""
    out = {}
    for c in CLASSES:
        tp = sum(m.counts[c][0] for m in matches)
        fp = sum(m.counts[c][1] for m in matches)
        fn = sum(m.counts[c][2] for m in matches)
        out[c] = PRCounts(tp, fp, fn)
    return out


def _all_point_ap(tp_flags: Sequence[bool], n_gt: int) -> float:
    tp = np.cumsum(tp_flags, dtype=float)
    fp = np.cumsum([not t for t in tp_flags], dtype=float)
    recall = np.concatenate([[0.0], tp / n_gt, [1.0]])
    precision = np.concatenate([[0.0], tp / np.maximum(tp + fp, 1.0), [0.0]])
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.nonzero(recall[1:] != recall[:-1])[0]
    return math.fsum((recall[steps + 1] - recall[steps]) * precision[steps + 1])


@dataclass(frozen=True)
class APResult:
    per_class: dict  # PolyClass -> AP or None when the class has no ground truth
    mean: Optional[float]


def average_precision(
    images: Sequence[tuple],
    cfg: MatchConfig = MatchConfig(),
    matches: Optional[Sequence[ImageMatch]] = None,
) -> APResult:
    """All-point interpolated AP per class at one chamfer threshold.

    ``images`` holds ``(preds, gts)`` pairs.  No confidence cutoff is applied;
    TP/FP status comes from :func:`match_image` (or from ``matches`` when they
    were computed already without the cutoff).  Classes without ground truth
    are left out of the mean.
    """
    ranked = {c: [] for c in CLASSES}
    n_gt = {c: 0 for c in CLASSES}
    for img, (preds, gts) in enumerate(images):
        m = matches[img] if matches is not None else match_image(preds, gts, cfg, apply_confidence=False)
        hits = {k for k, _, _ in m.pairs}
        for k, p in enumerate(preds):
            ranked[p.label].append((-p.confidence, img, k, k in hits))
        for g in gts:
            n_gt[g.label] += 1
    per = {}
    for c in CLASSES:
        if n_gt[c] == 0:
            per[c] = None
            continue
        flags = [hit for *_, hit in sorted(ranked[c])]
        per[c] = _all_point_ap(flags, n_gt[c]) if flags else 0.0
    valid = [v for v in per.values() if v is not None]
    return APResult(per, math.fsum(valid) / len(valid) if valid else None)


@dataclass
class MeasurementErrors:
    mae: dict  # PolyClass -> float or None
    mre: dict
    n_pairs: dict
    mae_ratio: Optional[float]
    mre_ratio: Optional[float]
    image_ratios: list  # dicts: id, pred_ratio, gt_ratio
    ratio_excluded: int


def _mean(xs) -> Optional[float]:
    xs = list(xs)
    return math.fsum(xs) / len(xs) if xs else None


def image_ratio(preds, gts, match: ImageMatch) -> tuple[Optional[float], Optional[float]]:
    """Mean matched-villi length over mean matched-crypt length, predicted and GT."""
    lengths = {c: ([], []) for c in CLASSES}
    for k, g, _ in match.pairs:
        lengths[gts[g].label][0].append(polyline_length(preds[k]))
        lengths[gts[g].label][1].append(polyline_length(gts[g]))
    out = []
    for side in (0, 1):
        v, c = _mean(lengths[PolyClass.VILLI][side]), _mean(lengths[PolyClass.CRYPT][side])
        out.append(v / c if v is not None and c else None)
    return out[0], out[1]


def measurement_errors(images: Sequence[tuple]) -> MeasurementErrors:
    """MAE (pixels) and MRE (percent) over matched pairs, plus per-image ratio errors.

    ``images`` holds ``(image_id, preds, gts, match)`` with polylines in pixel
    coordinates.  Images without a matched villus and crypt are left out of the
    ratio errors and counted in ``ratio_excluded``.
    """
    abs_err = {c: [] for c in CLASSES}
    rel_err = {c: [] for c in CLASSES}
    ratio_abs, ratio_rel, rows = [], [], []
    excluded = 0
    for image_id, preds, gts, match in images:
        for k, g, _ in match.pairs:
            true_len = polyline_length(gts[g])
            err = abs(polyline_length(preds[k]) - true_len)
            abs_err[gts[g].label].append(err)
            if true_len > 0:
                rel_err[gts[g].label].append(100.0 * err / true_len)
        pred_r, gt_r = image_ratio(preds, gts, match)
        rows.append({"id": image_id, "pred_ratio": pred_r, "gt_ratio": gt_r})
        if pred_r is None or gt_r is None:
            excluded += 1
            continue
        ratio_abs.append(abs(pred_r - gt_r))
        if gt_r > 0:
            ratio_rel.append(100.0 * abs(pred_r - gt_r) / gt_r)
    return MeasurementErrors(
        mae={c: _mean(abs_err[c]) for c in CLASSES},
        mre={c: _mean(rel_err[c]) for c in CLASSES},
        n_pairs={c: len(abs_err[c]) for c in CLASSES},
        mae_ratio=_mean(ratio_abs),
        mre_ratio=_mean(ratio_rel),
        image_ratios=rows,
        ratio_excluded=excluded,
    )


def dice_iou(pred, gt, label: int) -> tuple[float, float]:
    """Dice and IoU of one label between two label rasters (both 1.0 when empty)."""
    p = np.asarray(getattr(pred, "labels", pred)) == label
    g = np.asarray(getattr(gt, "labels", gt)) == label
    if p.shape != g.shape:
        raise ValueError(f"raster shapes differ: {p.shape} vs {g.shape}")
    inter = int(np.count_nonzero(p & g))
    a, b = int(np.count_nonzero(p)), int(np.count_nonzero(g))
    union = a + b - inter
    if union == 0:
        return 1.0, 1.0
    return 2 * inter / (a + b), inter / union
