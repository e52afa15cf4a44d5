"""Detection and segmentation losses with analytic gradients.

Every loss returns a :class:`LossValue`.  For polyline losses the gradient is
taken with respect to the *predicted* coordinates, flattened as
``(x_s, y_s, x_m, y_m, x_e, y_e)``.  At kinks (``|.|`` at zero, argmin ties, zero
length segments) the subgradient 0 is used.

:func:`gradcheck` compares the analytic gradients against central finite
differences on random inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dtw import dtw_align
from .geom import PointsLike, as_points

PROB_CLAMP = 1e-7
DICE_EPS = 1e-6


@dataclass(frozen=True)
class LossValue:
    value: float
    gradient: np.ndarray
    components: dict = field(default_factory=dict)
    partial: bool = False

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class FocalParams:
    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


@dataclass(frozen=True)
class LossWeights:
    loc: float = 1.0
    chamfer: float = 1.0
    focal: float = 1.0
    length: float = 1.0
    part_length: float = 1.0


def _pair(pred: PointsLike, gt: PointsLike) -> tuple[np.ndarray, np.ndarray]:
    P, G = as_points(pred), as_points(gt)
    if P.shape != G.shape:
        raise ValueError(f"prediction shape {P.shape} != ground truth shape {G.shape}")
    return P, G


# -- polyline losses ---------------------------------------------------------


def loc_loss(pred: PointsLike, gt: PointsLike) -> LossValue:
    """L1 distance between corresponding coordinates."""
    P, G = _pair(pred, gt)
    d = P - G
    return LossValue(float(np.abs(d).sum()), np.sign(d).ravel())


def chamfer_loss(pred: PointsLike, gt: PointsLike) -> LossValue:
    P, G = as_points(pred), as_points(gt)
    diff = G[:, None, :] - P[None, :, :]
    d = diff[..., 0] ** 2 + diff[..., 1] ** 2  # rows: gt points, cols: pred points
    k_star = d.argmin(axis=1)
    j_star = d.argmin(axis=0)
    value = float(d.min(axis=1).mean() + d.min(axis=0).mean())

    grad = np.zeros_like(P)
    for j, k in enumerate(k_star):
        grad[k] += 2.0 * (P[k] - G[j]) / len(G)
    for k, j in enumerate(j_star):
        grad[k] += 2.0 * (P[k] - G[j]) / len(P)
    return LossValue(value, grad.ravel())


def _length_and_grad(P: np.ndarray) -> tuple[float, np.ndarray]:
    seg = np.diff(P, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    grad = np.zeros_like(P)
    for s, (vec, length) in enumerate(zip(seg, lengths)):
        if length > 0:
            u = vec / length
            grad[s + 1] += u
            grad[s] -= u
    total = 0.0
    for length in lengths:
        total += float(length)
    return total, grad


def length_loss(pred: PointsLike, gt: PointsLike) -> LossValue:
    """Absolute difference of total polyline lengths."""
    P, G = as_points(pred), as_points(gt)
    m_pred, dm = _length_and_grad(P)
    m_gt, _ = _length_and_grad(G)
    gap = m_gt - m_pred
    return LossValue(abs(gap), (-np.sign(gap) * dm).ravel())


def part_length_loss(pred: PointsLike, gt: PointsLike, squared: bool = False) -> LossValue:
    """Start-middle and middle-end segment length mismatch on 3-point polylines.

    ``squared=True`` compares squared segment lengths instead (ablation switch).
    """
    P, G = _pair(pred, gt)
    if len(P) != 3:
        raise ValueError("part_length_loss needs 3-point polylines")
    value = 0.0
    grad = np.zeros_like(P)
    for a, b in ((0, 1), (1, 2)):
        vp, vg = P[b] - P[a], G[b] - G[a]
        if squared:
            dp, dg = float(vp @ vp), float(vg @ vg)
            ddp = 2.0 * vp
        else:
            dp, dg = math.hypot(*vp), math.hypot(*vg)
            ddp = vp / dp if dp > 0 else np.zeros(2)
        gap = dg - dp
        value += abs(gap)
        s = -np.sign(gap)
        grad[b] += s * ddp
        grad[a] -= s * ddp
    return LossValue(value, grad.ravel())


def focal_loss(y, y_hat, params: FocalParams = FocalParams()) -> LossValue:
    """Focal loss summed over entries; gradient is with respect to ``y_hat``.

    ``y == 1`` uses ``-alpha (1 - p)^gamma log p``; ``y == 0`` uses the mirrored
    ``-(1 - alpha) p^gamma log(1 - p)``.  ``p`` is clamped to
    ``[1e-7, 1 - 1e-7]`` and the gradient is 0 where the clamp is active.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    raw = np.atleast_1d(np.asarray(y_hat, dtype=float))
    if y.shape != raw.shape:
        raise ValueError(f"target shape {y.shape} != prediction shape {raw.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("focal targets must be 0 or 1")
    a, g = params.alpha, params.gamma
    p = np.clip(raw, PROB_CLAMP, 1.0 - PROB_CLAMP)
    q = 1.0 - p
    pos = -a * q**g * np.log(p)
    neg = -(1.0 - a) * p**g * np.log(q)
    dpos = a * (g * q ** (g - 1) * np.log(p) - q**g / p) if g > 0 else -a / p
    dneg = -(1.0 - a) * (g * p ** (g - 1) * np.log(q) - p**g / q) if g > 0 else (1.0 - a) / q
    value = np.where(y == 1, pos, neg)
    grad = np.where(y == 1, dpos, dneg)
    grad = np.where(p == raw, grad, 0.0)
    return LossValue(float(value.sum()), grad.ravel())


def total_detection_loss(
    pred: PointsLike,
    gt: PointsLike,
    y,
    y_hat,
    weights: LossWeights = LossWeights(),
    focal: FocalParams = FocalParams(),
    squared_parts: bool = False,
) -> LossValue:
    """Weighted sum of localization, chamfer, focal, length and part-length losses.

    The gradient is the six coordinate partials followed by the partials with
    respect to each class probability in ``y_hat``.
    """
    terms = {
        "loc": (weights.loc, loc_loss(pred, gt)),
        "chamfer": (weights.chamfer, chamfer_loss(pred, gt)),
        "length": (weights.length, length_loss(pred, gt)),
        "part_length": (weights.part_length, part_length_loss(pred, gt, squared_parts)),
    }
    fl = focal_loss(y, y_hat, focal)
    coord_grad = sum(w * lv.gradient for w, lv in terms.values())
    value = math.fsum([w * lv.value for w, lv in terms.values()] + [weights.focal * fl.value])
    components = {name: lv.value for name, (_, lv) in terms.items()}
    components["focal"] = fl.value
    return LossValue(value, np.concatenate([coord_grad, weights.focal * fl.gradient]), components)


# -- segmentation losses -----------------------------------------------------


def _dice(p: np.ndarray, q: np.ndarray) -> tuple[float, np.ndarray]:
    num = 2.0 * float((p * q).sum()) + DICE_EPS
    den = float(p.sum() + q.sum()) + DICE_EPS
    grad = -(2.0 * q * den - num) / den**2
    return 1.0 - num / den, grad


def dice_loss(pred_mask, gt_mask) -> LossValue:
    """``1 - (2 sum(pq) + eps) / (sum(p) + sum(q) + eps)``; gradient w.r.t. ``pred_mask``."""
    p = np.asarray(pred_mask, dtype=float)
    q = np.asarray(gt_mask, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"mask shapes differ: {p.shape} vs {q.shape}")
    value, grad = _dice(p, q)
    return LossValue(value, grad.ravel())


def _cross_entropy(probs: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    n = labels.size
    rows, cols = np.indices(labels.shape)
    p_true = probs[labels, rows, cols]
    clamped = np.maximum(p_true, PROB_CLAMP)
    grad = np.zeros_like(probs)
    grad[labels, rows, cols] = np.where(p_true >= PROB_CLAMP, -1.0 / (n * clamped), 0.0)
    return math.fsum((-np.log(clamped)).ravel()) / n, grad


def cross_entropy_loss(pred_probs, gt_labels) -> LossValue:
    """Mean per-pixel ``-log p(true class)``.

    ``pred_probs`` is channel-first ``(K, H, W)`` and must sum to one per pixel;
    the gradient is with respect to the probabilities themselves.
    """
    probs = np.asarray(pred_probs, dtype=float)
    labels = np.asarray(gt_labels)
    if probs.ndim != 3 or probs.shape[1:] != labels.shape:
        raise ValueError(f"probability shape {probs.shape} does not match labels {labels.shape}")
    if np.any(np.abs(probs.sum(axis=0) - 1.0) > 1e-6):
        raise ValueError("per-pixel probabilities must sum to 1")
    if labels.min() < 0 or labels.max() >= probs.shape[0]:
        raise ValueError("label outside the probability channels")
    value, grad = _cross_entropy(probs, labels.astype(int))
    return LossValue(value, grad.ravel())


def _dtw(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray, list]:
    cost, path = dtw_align(a, b)
    norm = len(a) + len(b)
    grad = np.zeros_like(a)
    for i, j in path:
        v = a[i] - b[j]
        dist = math.hypot(*v)
        if dist > 0:
            grad[i] += v / dist
    return cost / norm, grad / norm, path


def dtw_loss(a: PointsLike, b: PointsLike) -> LossValue:
    """DTW alignment cost normalized by ``len(a) + len(b)``; gradient w.r.t. ``a``."""
    A, B = as_points(a), as_points(b)
    if len(A) == 0 or len(B) == 0:
        raise ValueError("dtw_loss needs non-empty sequences")
    value, grad, _ = _dtw(A, B)
    return LossValue(value, grad.ravel())


def segmentation_loss(pred_probs, gt_labels, contours: Optional[tuple] = None) -> LossValue:
    """Dice + cross-entropy + DTW.

    Dice is averaged over the foreground channels ``1..K-1``.  ``contours`` is a
    ``(shoulder, border)`` pair of predicted contours; without it the DTW term is
    left out and the result is marked ``partial``.  The gradient is the
    probability partials followed by the shoulder-contour partials.
    """
    probs = np.asarray(pred_probs, dtype=float)
    labels = np.asarray(gt_labels)
    ce = cross_entropy_loss(probs, labels)
    k = probs.shape[0]
    dice_vals, dice_grad = [], np.zeros_like(probs)
    for c in range(1, k):
        v, g = _dice(probs[c], (labels == c).astype(float))
        dice_vals.append(v)
        dice_grad[c] = g / (k - 1)
    dice = math.fsum(dice_vals) / (k - 1) if k > 1 else 0.0
    terms = [LossValue(dice, dice_grad.ravel()), ce]
    names = ["dice", "ce"]
    if contours is not None:
        terms.append(dtw_loss(*contours))
        names.append("dtw")
    return combine_losses(dict(zip(names, terms)), shared=("dice", "ce"))


def combine_losses(terms: dict, shared: Sequence[str] = ()) -> LossValue:
    """Unweighted sum of loss terms.

    Gradients of the ``shared`` terms act on the same variables and are added;
    the remaining gradients are appended in order.  A result without a ``dtw``
    term among segmentation terms is flagged ``partial``.
    """
    value = math.fsum(t.value for t in terms.values())
    shared_grads = [terms[n].gradient for n in shared if n in terms]
    grads = [sum(shared_grads)] if shared_grads else []
    grads += [t.gradient for n, t in terms.items() if n not in shared]
    partial = "ce" in terms and "dtw" not in terms
    return LossValue(
        value,
        np.concatenate(grads) if grads else np.zeros(0),
        {n: t.value for n, t in terms.items()},
        partial,
    )


# -- finite-difference verification ------------------------------------------

NONSMOOTH_MARGIN = 1e-3
_REL_FLOOR = 1e-3


@dataclass(frozen=True)
class _Op:
    sample: Callable  # rng -> instance dict with "x"
    evaluate: Callable  # (x, inst) -> (value, grad)
    signature: Callable  # (x, inst) -> hashable branch id, or None when degenerate


def _poly_sample(rng):
    return {"x": rng.uniform(0, 10, 6), "gt": rng.uniform(0, 10, (3, 2))}


def _signs(*vals):
    return tuple(int(np.sign(v)) for v in vals)


def _chamfer_signature(x, inst):
    P, G = x.reshape(-1, 2), inst["gt"]
    d = ((G[:, None, :] - P[None, :, :]) ** 2).sum(-1)
    if d.min() < NONSMOOTH_MARGIN:
        return None
    return tuple(d.argmin(1)) + tuple(d.argmin(0))


def _length_signature(x, inst):
    P = x.reshape(-1, 2)
    if np.min(np.hypot(*np.diff(P, axis=0).T)) < NONSMOOTH_MARGIN:
        return None
    return _signs(_length_and_grad(inst["gt"])[0] - _length_and_grad(P)[0])


def _part_signature(x, inst):
    P, G = x.reshape(-1, 2), inst["gt"]
    dp = [math.hypot(*(P[b] - P[a])) for a, b in ((0, 1), (1, 2))]
    if min(dp) < NONSMOOTH_MARGIN:
        return None
    dg = [math.hypot(*(G[b] - G[a])) for a, b in ((0, 1), (1, 2))]
    return _signs(dg[0] - dp[0], dg[1] - dp[1])


def _focal_sample(rng):
    return {"x": rng.uniform(0.05, 0.95, 4), "y": rng.integers(0, 2, 4)}


def _mask_sample(rng):
    gt = (rng.uniform(size=(4, 4)) < 0.5).astype(float)
    gt[0, 0] = 1.0
    return {"x": rng.uniform(0.05, 0.95, 16), "gt": gt}


def _ce_sample(rng):
    k, h, w = 3, 3, 3
    probs = 0.5 * rng.dirichlet(np.ones(k), size=(h, w)) + 0.5 / k
    return {"x": np.moveaxis(probs, -1, 0).ravel(), "labels": rng.integers(0, k, (h, w)), "k": k}


def _dtw_sample(rng):
    n, m = rng.integers(2, 7, 2)
    return {"x": rng.uniform(0, 10, 2 * n), "b": rng.uniform(0, 10, (m, 2))}


def _dtw_signature(x, inst):
    A, B = x.reshape(-1, 2), inst["b"]
    if np.sqrt(((A[:, None] - B[None]) ** 2).sum(-1)).min() < NONSMOOTH_MARGIN:
        return None
    return tuple(dtw_align(A, B)[1])


def _lv(fn):
    def evaluate(*args):
        lv = fn(*args)
        return lv.value, lv.gradient

    return evaluate


OPS: dict[str, _Op] = {
    "loc": _Op(
        _poly_sample,
        _lv(lambda x, i: loc_loss(x.reshape(-1, 2), i["gt"])),
        lambda x, i: _signs(*(x - i["gt"].ravel())),
    ),
    "chamfer": _Op(_poly_sample, _lv(lambda x, i: chamfer_loss(x.reshape(-1, 2), i["gt"])), _chamfer_signature),
    "length": _Op(_poly_sample, _lv(lambda x, i: length_loss(x.reshape(-1, 2), i["gt"])), _length_signature),
    "part_length": _Op(
        _poly_sample, _lv(lambda x, i: part_length_loss(x.reshape(-1, 2), i["gt"])), _part_signature
    ),
    "focal": _Op(
        _focal_sample,
        _lv(lambda x, i: focal_loss(i["y"], x)),
        lambda x, i: tuple((x > PROB_CLAMP) & (x < 1 - PROB_CLAMP)),
    ),
    "dice": _Op(
        _mask_sample,
        lambda x, i: (lambda v, g: (v, g.ravel()))(*_dice(x.reshape(i["gt"].shape), i["gt"])),
        lambda x, i: 0,
    ),
    "ce": _Op(
        _ce_sample,
        lambda x, i: (lambda v, g: (v, g.ravel()))(
            *_cross_entropy(x.reshape((i["k"],) + i["labels"].shape), i["labels"])
        ),
        lambda x, i: tuple(x >= PROB_CLAMP),
    ),
    "dtw": _Op(
        _dtw_sample,
        lambda x, i: (lambda v, g, _: (v, g.ravel()))(*_dtw(x.reshape(-1, 2), i["b"])),
        _dtw_signature,
    ),
}


@dataclass(frozen=True)
class GradcheckReport:
    op: str
    trials: int
    checked: int
    skipped: int
    max_rel_error: float
    instances_checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_rel_error <= self.tolerance


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), _REL_FLOOR)


def gradcheck(
    op: str,
    trials: int = 100,
    step: float = 1e-5,
    tolerance: float = 1e-4,
    rng: Optional[np.random.Generator] = None,
    instances: Optional[Sequence[dict]] = None,
) -> GradcheckReport:
    """Compare analytic gradients of ``op`` with central finite differences.

    Random instances come from ``rng`` unless ``instances`` is given.  A
    coordinate is skipped when moving it by ``NONSMOOTH_MARGIN`` in either
    direction changes the loss's branch (sign of an ``|.|``, an argmin, the DTW
    path), and a whole instance is skipped when it sits on a degenerate point.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    entry = OPS[op]
    if instances is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        instances = [entry.sample(rng) for _ in range(trials)]
    checked = skipped = used = 0
    worst = 0.0
    for inst in instances:
        x = np.asarray(inst["x"], dtype=float)
        sig = entry.signature(x, inst)
        if sig is None:
            skipped += x.size
            continue
        _, grad = entry.evaluate(x, inst)
        before = checked
        for c in range(x.size):
            e = np.zeros_like(x)
            e[c] = NONSMOOTH_MARGIN
            if entry.signature(x + e, inst) != sig or entry.signature(x - e, inst) != sig:
                skipped += 1
                continue
            e[c] = step
            numeric = (entry.evaluate(x + e, inst)[0] - entry.evaluate(x - e, inst)[0]) / (2 * step)
            worst = max(worst, relative_error(float(grad[c]), numeric))
            checked += 1
        used += checked > before
    return GradcheckReport(op, len(instances), checked, skipped, worst, used, tolerance)
