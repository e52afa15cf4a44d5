"""Celiac grading from the villi-to-crypt length ratio (Vd:Cd)."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence


class Binary(str, enum.Enum):
    NORMAL = "Normal"
    CED = "CeD"


class Marsh(str, enum.Enum):
    NORMAL = "Normal"
    MARSH1 = "Marsh1"
    MARSH2 = "Marsh2"
    MARSH3 = "Marsh3"


@dataclass(frozen=True)
class GradeThresholds:
    """Band edges.  ``ties_less_severe`` puts a ratio equal to an interior edge
    (1.05 or 0.95) in the milder grade; a ratio of exactly ``normal`` is never
    Normal."""

    normal: float = 3.0
    marsh1: float = 1.05
    marsh2: float = 0.95
    ties_less_severe: bool = True


DEFAULT_THRESHOLDS = GradeThresholds()


@dataclass(frozen=True)
class GradeResult:
    image_id: str
    vd_cd: float
    binary: Binary
    marsh: Marsh

    def to_dict(self) -> dict:
        return {"id": self.image_id, "vd_cd": self.vd_cd, "binary": self.binary.value, "marsh": self.marsh.value}


def marsh_grade(vd_cd: float, th: GradeThresholds = DEFAULT_THRESHOLDS) -> Marsh:
    if not math.isfinite(vd_cd) or vd_cd < 0:
        raise ValueError(f"Vd:Cd ratio must be finite and >= 0, got {vd_cd}")
    if vd_cd > th.normal:
        return Marsh.NORMAL
    if th.ties_less_severe:
        if vd_cd >= th.marsh1:
            return Marsh.MARSH1
        if vd_cd >= th.marsh2:
            return Marsh.MARSH2
    else:
        if vd_cd > th.marsh1:
            return Marsh.MARSH1
        if vd_cd > th.marsh2:
            return Marsh.MARSH2
    return Marsh.MARSH3


def to_binary(m: Marsh) -> Binary:
    return Binary.NORMAL if Marsh(m) is Marsh.NORMAL else Binary.CED


def grade(vd_cd: float, image_id: str = "", th: GradeThresholds = DEFAULT_THRESHOLDS) -> GradeResult:
    m = marsh_grade(vd_cd, th)
    return GradeResult(image_id, float(vd_cd), to_binary(m), m)


@dataclass(frozen=True)
class ClassificationScores:
    accuracy: float
    precision: float
    recall: float
    f1: float

    def to_dict(self, percent: bool = True) -> dict:
        k = 100.0 if percent else 1.0
        return {"accuracy": k * self.accuracy, "precision": k * self.precision, "recall": k * self.recall, "f1": k * self.f1}


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def _label(x, task: str):
    if isinstance(x, GradeResult):
        x = x.marsh
    if task == "binary":
        if isinstance(x, Binary) or x in {b.value for b in Binary}:
            return Binary(x)
        return to_binary(Marsh(x))
    return Marsh(x)


def classification_scores(predicted: Sequence, truth: Sequence, task: str = "marsh") -> ClassificationScores:
    """Accuracy plus precision/recall/F1.

    ``binary`` scores the CeD class as positive (Marsh labels are collapsed);
    ``marsh`` macro-averages over the classes present in either list.
    """
    if task not in ("binary", "marsh"):
        raise ValueError(f"unknown task {task!r}")
    if len(predicted) != len(truth):
        raise ValueError(f"length mismatch: {len(predicted)} predictions vs {len(truth)} labels")
    if not truth:
        raise ValueError("classification_scores needs at least one sample")
    pred = [_label(x, task) for x in predicted]
    true = [_label(x, task) for x in truth]
    acc = sum(p == t for p, t in zip(pred, true)) / len(true)

    def counts(c):
        tp = sum(p == c and t == c for p, t in zip(pred, true))
        fp = sum(p == c and t != c for p, t in zip(pred, true))
        fn = sum(p != c and t == c for p, t in zip(pred, true))
        return tp, fp, fn

    if task == "binary":
        return ClassificationScores(acc, *_prf(*counts(Binary.CED)))
    classes = [c for c in Marsh if c in pred or c in true]
    per = [_prf(*counts(c)) for c in classes]
    n = len(per)
    return ClassificationScores(
        acc,
        math.fsum(p for p, _, _ in per) / n,
        math.fsum(r for _, r, _ in per) / n,
        math.fsum(f for _, _, f in per) / n,
    )
