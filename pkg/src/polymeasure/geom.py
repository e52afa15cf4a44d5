"""Polyline primitives: lengths, three-point resampling, chamfer and EMD distances.

Points are ``(x, y)`` in image pixels unless a function says otherwise.  Most
functions accept either a :class:`Polyline` or any ``(n, 2)`` array-like, so the
same code measures annotations, predictions and dense contours.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np


class PolyClass(str, enum.Enum):
    VILLI = "villi"
    CRYPT = "crypt"


class DistanceKind(str, enum.Enum):
    CHAMFER = "chamfer"
    EMD = "emd"


class ResamplePolicy(str, enum.Enum):
    DUPLICATE_ENDPOINT = "duplicate_endpoint"
    MIDPOINT = "midpoint"
    SAMPLE_INTERIOR = "sample_interior"


@dataclass(frozen=True)
class Polyline:
    """An ordered 2-4 point polyline with a class label and a confidence."""

    points: tuple[tuple[float, float], ...]
    label: PolyClass = PolyClass.VILLI
    confidence: float = 1.0

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.points)
        if not 2 <= len(pts) <= 4:
            raise ValueError(f"polyline needs 2-4 points, got {len(pts)}")
        if not all(math.isfinite(c) for p in pts for c in p):
            raise ValueError("polyline points must be finite")
        conf = float(self.confidence)
        if not 0.0 <= conf <= 1.0:
            raise ValueError(f"confidence {conf} outside [0, 1]")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "label", PolyClass(self.label))
        object.__setattr__(self, "confidence", conf)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def xy(self) -> np.ndarray:
        return np.array(self.points, dtype=float)

    def with_points(self, points) -> "Polyline":
        return replace(self, points=tuple(map(tuple, np.asarray(points, dtype=float))))


PointsLike = Union[Polyline, Sequence[Sequence[float]], np.ndarray]


def as_points(p: PointsLike) -> np.ndarray:
    """Return the points of ``p`` as a fresh float ``(n, 2)`` array."""
    if isinstance(p, Polyline):
        return p.xy
    arr = np.array(p, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, 2)
    return arr.reshape(-1, 2)


def segment_lengths(p: PointsLike) -> np.ndarray:
    pts = as_points(p)
    return np.hypot(*np.diff(pts, axis=0).T)


def polyline_length(p: PointsLike) -> float:
    """Sum of Euclidean segment lengths (pixels, not pixels squared)."""
    pts = as_points(p)
    total = 0.0
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        total += math.hypot(x1 - x0, y1 - y0)
    return total


def resample_to_three(p: Polyline, policy: ResamplePolicy = ResamplePolicy.DUPLICATE_ENDPOINT) -> Polyline:
    """Convert a 2-4 point polyline into start/middle/end form.

    Two points: ``DUPLICATE_ENDPOINT`` repeats the end point, ``MIDPOINT`` and
    ``SAMPLE_INTERIOR`` insert the segment midpoint.  Four points: every policy
    keeps start and end plus the interior vertex closest to half the arc length
    (first one on ties).  Three points come back unchanged.
    """
    policy = ResamplePolicy(policy)
    pts = as_points(p)
    n = len(pts)
    if not 2 <= n <= 4:
        raise ValueError(f"resample_to_three needs 2-4 points, got {n}")
    if n == 3:
        return p
    if n == 2:
        if policy is ResamplePolicy.DUPLICATE_ENDPOINT:
            mid = pts[1]
        else:
            mid = (pts[0] + pts[1]) / 2.0
        return p.with_points([pts[0], mid, pts[1]])
    cum = np.concatenate([[0.0], np.cumsum(segment_lengths(pts))])
    half = cum[-1] / 2.0
    k = 1 + int(np.argmin(np.abs(cum[1:-1] - half)))
    return p.with_points([pts[0], pts[k], pts[-1]])


def pairwise_sq_dists(a: PointsLike, b: PointsLike) -> np.ndarray:
    A, B = as_points(a), as_points(b)
    diff = A[:, None, :] - B[None, :, :]
    return diff[..., 0] ** 2 + diff[..., 1] ** 2


def chamfer_distance(a: PointsLike, b: PointsLike) -> float:
    """Symmetric chamfer distance with squared point distances.

    Mean nearest squared distance from ``a`` to ``b`` plus the same from ``b`` to
    ``a``.
    """
    d = pairwise_sq_dists(a, b)
    if d.size == 0:
        raise ValueError("chamfer_distance needs non-empty point sets")
    return float(d.min(axis=1).mean() + d.min(axis=0).mean())


def emd_distance(a: PointsLike, b: PointsLike) -> float:
    """Exact earth mover's distance between equal-size, uniformly weighted point sets.

    Transport cost is the plain Euclidean distance; the optimum is the best
    one-to-one pairing, found with the Hungarian solver.
    """
    from .assign import hungarian_solve

    A, B = as_points(a), as_points(b)
    if len(A) != len(B):
        raise ValueError(f"emd_distance needs equal point counts, got {len(A)} and {len(B)}")
    if len(A) == 0:
        raise ValueError("emd_distance needs non-empty point sets")
    cost = [[math.hypot(*(p - q)) for q in B] for p in A]
    return hungarian_solve(cost).total_cost / len(A)


def normalize_polyline(p: Polyline, width: int, height: int) -> tuple[Polyline, bool]:
    """Map pixel coordinates into ``[0, 1]``; out-of-range points are clamped.

    Returns the normalized polyline and whether any coordinate was clamped.
    """
    if width <= 0 or height <= 0:
        raise ValueError(f"image dimensions must be positive, got {width}x{height}")
    pts = as_points(p) / np.array([width, height], dtype=float)
    clipped = np.clip(pts, 0.0, 1.0)
    return p.with_points(clipped), bool(np.any(clipped != pts))


def denormalize_polyline(p: Polyline, width: int, height: int) -> Polyline:
    if width <= 0 or height <= 0:
        raise ValueError(f"image dimensions must be positive, got {width}x{height}")
    return p.with_points(as_points(p) * np.array([width, height], dtype=float))
