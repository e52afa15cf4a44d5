"""End-to-end evaluation of prediction records against ground-truth records."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from typing import Optional, Sequence

from .geom import PolyClass, normalize_polyline
from .grading import DEFAULT_THRESHOLDS, GradeThresholds, classification_scores, grade
from .metrics import (
    CLASSES,
    MatchConfig,
    average_precision,
    match_image,
    measurement_errors,
    precision_recall,
)
from .records import ImageRecord

MASK_LABELS = (1, 2, 3, 4)


class InvariantError(RuntimeError):
    """An internal consistency check on the report failed."""


def _per_image(gt: ImageRecord, pred: Optional[ImageRecord], cfg: MatchConfig):
    preds = list(pred.polylines) if pred is not None else []
    gts = list(gt.polylines)
    norm_p = [normalize_polyline(p, gt.width, gt.height)[0] for p in preds]
    norm_g = [normalize_polyline(g, gt.width, gt.height)[0] for g in gts]
    return (
        preds,
        gts,
        norm_p,
        norm_g,
        match_image(norm_p, norm_g, cfg, apply_confidence=True),
        match_image(norm_p, norm_g, cfg, apply_confidence=False),
    )


def _mask_scores(gt_masks: dict, pred_masks: dict, ids: Sequence[str]):
    """Dice/IoU pooled over images per label, then averaged over labels present."""
    inter = {k: 0 for k in MASK_LABELS}
    size_p = dict(inter)
    size_g = dict(inter)
    used = [i for i in ids if i in gt_masks and i in pred_masks]
    if not used:
        return None, None
    for i in used:
        g, p = gt_masks[i].labels, pred_masks[i].labels
        if g.shape != p.shape:
            raise ValueError(f"mask size mismatch for image {i}: {g.shape} vs {p.shape}")
        for k in MASK_LABELS:
            pk, gk = p == k, g == k
            inter[k] += int((pk & gk).sum())
            size_p[k] += int(pk.sum())
            size_g[k] += int(gk.sum())
    dices, ious = [], []
    for k in MASK_LABELS:
        total = size_p[k] + size_g[k]
        if total == 0:
            continue
        dices.append(2 * inter[k] / total)
        ious.append(inter[k] / (total - inter[k]))
    if not dices:
        return 1.0, 1.0
    return math.fsum(dices) / len(dices), math.fsum(ious) / len(ious)


def run_eval(
    gt_records: Sequence[ImageRecord],
    pred_records: Sequence[ImageRecord],
    cfg: MatchConfig = MatchConfig(),
    workers: int = 1,
    gt_masks: Optional[dict] = None,
    pred_masks: Optional[dict] = None,
    thresholds: GradeThresholds = DEFAULT_THRESHOLDS,
) -> dict:
    """Build the evaluation report.

    Images are processed in ground-truth id order.  A ground-truth image with no
    prediction record counts as having no predictions; prediction records with
    unknown ids are ignored.  Both cases are listed under ``unmatched_ids``.
    """
    gt_by_id = {r.id: r for r in gt_records}
    pred_by_id = {r.id: r for r in pred_records}
    ids = sorted(gt_by_id)
    jobs = [(gt_by_id[i], pred_by_id.get(i), cfg) for i in ids]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: _per_image(*job), jobs))
    else:
        results = [_per_image(*job) for job in jobs]

    pr = precision_recall([r[4] for r in results])
    ap = average_precision([(r[2], r[3]) for r in results], cfg, matches=[r[5] for r in results])
    me = measurement_errors([(i, r[0], r[1], r[4]) for i, r in zip(ids, results)])

    for c in CLASSES:
        n_gt = sum(1 for r in results for g in r[1] if g.label is c)
        if pr[c].tp + pr[c].fn != n_gt:
            raise InvariantError(f"{c.value}: TP + FN = {pr[c].tp + pr[c].fn} but {n_gt} ground-truth polylines")

    grades, pred_grades, true_grades = [], [], []
    for row in me.image_ratios:
        if row["pred_ratio"] is None or row["gt_ratio"] is None:
            continue
        g = grade(row["pred_ratio"], row["id"], thresholds)
        grades.append(g.to_dict())
        pred_grades.append(g.marsh)
        true_grades.append(grade(row["gt_ratio"], row["id"], thresholds).marsh)
    classification = None
    if true_grades:
        classification = {
            task: classification_scores(pred_grades, true_grades, task).to_dict()
            for task in ("binary", "marsh")
        }

    dice = iou = None
    if gt_masks is not None and pred_masks is not None:
        dice, iou = _mask_scores(gt_masks, pred_masks, ids)

    v, c = PolyClass.VILLI, PolyClass.CRYPT
    report = {
        "precision_villi": pr[v].precision,
        "recall_villi": pr[v].recall,
        "ap_villi": ap.per_class[v],
        "precision_crypt": pr[c].precision,
        "recall_crypt": pr[c].recall,
        "ap_crypt": ap.per_class[c],
        "map": ap.mean,
        "mae_villi": me.mae[v],
        "mre_villi": me.mre[v],
        "mae_crypt": me.mae[c],
        "mre_crypt": me.mre[c],
        "mae_ratio": me.mae_ratio,
        "mre_ratio": me.mre_ratio,
        "dice": dice,
        "iou": iou,
        "grades": grades,
        "classification": classification,
        "counts": {
            k.value: {"tp": pr[k].tp, "fp": pr[k].fp, "fn": pr[k].fn, "n_gt": pr[k].tp + pr[k].fn, "pairs": me.n_pairs[k]}
            for k in CLASSES
        },
        "images": me.image_ratios,
        "ratio_excluded": me.ratio_excluded,
        "unmatched_ids": {
            "gt_only": [i for i in ids if i not in pred_by_id],
            "pred_only": sorted(i for i in pred_by_id if i not in gt_by_id),
        },
        "config": {
            "chamfer_threshold": cfg.chamfer_threshold,
            "confidence_threshold": cfg.confidence_threshold,
            "distance": cfg.distance.value,
            "grade_thresholds": asdict(thresholds),
        },
    }
    _check_finite(report)
    return report


def _check_finite(obj, where: str = "report") -> None:
    if isinstance(obj, float) and not math.isfinite(obj):
        raise InvariantError(f"{where} is not finite: {obj}")
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{where}.{k}")
    elif isinstance(obj, list):
        for k, v in enumerate(obj):
            _check_finite(v, f"{where}[{k}]")


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, allow_nan=False) + "\n"
