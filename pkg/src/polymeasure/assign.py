"""Exact minimum-cost bipartite assignment and polyline matching costs.

``hungarian_solve`` runs the O(n^3) shortest-augmenting-path Hungarian method on
a square (padded) matrix, then picks the lexicographically smallest optimum among
the edges that are tight under the final dual potentials.  Every optimal
assignment uses only tight edges, so this gives a platform-independent answer
when several assignments tie.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geom import (
    DistanceKind,
    Polyline,
    ResamplePolicy,
    chamfer_distance,
    emd_distance,
    resample_to_three,
)


@dataclass(frozen=True)
class Assignment:
    pairs: tuple[tuple[int, int], ...]
    unmatched_rows: tuple[int, ...]
    unmatched_cols: tuple[int, ...]
    total_cost: float


def _hungarian(a: list[list[float]]) -> tuple[list[int], list[float], list[float]]:
    """Square Hungarian method.  Returns row->col and the row/col potentials."""
    n = len(a)
    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = a[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    row_to_col = [0] * n
    for j in range(1, n + 1):
        row_to_col[p[j] - 1] = j - 1
    return row_to_col, u[1:], v[1:]


def _perfect_matching_exists(rows: Sequence[int], cols: set[int], adj: list[list[int]]) -> bool:
    """Kuhn's augmenting-path check restricted to ``rows`` x ``cols``."""
    match_col: dict[int, int] = {}

    def augment(r: int, seen: set[int]) -> bool:
        for c in adj[r]:
            if c in cols and c not in seen:
                seen.add(c)
                if c not in match_col or augment(match_col[c], seen):
                    match_col[c] = r
                    return True
        return False

    return all(augment(r, set()) for r in rows)


def _lexmin_tight(a: list[list[float]], u: list[float], v: list[float]) -> Optional[list[int]]:
    n = len(a)
    scale = 1.0 + max(abs(x) for row in a for x in row)
    tol = 1e-10 * scale * n
    adj = [[j for j in range(n) if abs(a[i][j] - u[i] - v[j]) <= tol] for i in range(n)]
    free = set(range(n))
    out = []
    for i in range(n):
        for j in adj[i]:
            if j not in free:
                continue
            free.discard(j)
            if _perfect_matching_exists(range(i + 1, n), free, adj):
                out.append(j)
                break
            free.add(j)
        else:
            return None
    return out


def hungarian_solve(costs, pad_cost: Optional[float] = None) -> Assignment:
    """Minimum-cost one-to-one assignment of rows to columns.

    Rectangular matrices are padded to square with ``pad_cost`` (default one plus
    the largest entry); rows or columns that land on padding are reported as
    unmatched.  Among equal-cost optima the lexicographically smallest pair list
    is returned.
    """
    c = np.asarray(costs, dtype=float)
    if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
        raise ValueError(f"cost matrix must be 2-D and non-empty, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix contains NaN or Inf")
    rows, cols = c.shape
    n = max(rows, cols)
    if pad_cost is None:
        pad_cost = 1.0 + float(c.max())
    sq = np.full((n, n), float(pad_cost))
    sq[:rows, :cols] = c
    a = sq.tolist()

    row_to_col, u, v = _hungarian(a)
    best = sum(a[i][row_to_col[i]] for i in range(n))
    lex = _lexmin_tight(a, u, v)
    if lex is not None:
        lex_total = sum(a[i][lex[i]] for i in range(n))
        if lex_total <= best + 1e-9 * (1.0 + abs(best)):
            row_to_col = lex

    pairs = tuple((i, j) for i, j in enumerate(row_to_col) if i < rows and j < cols)
    matched_rows = {i for i, _ in pairs}
    matched_cols = {j for _, j in pairs}
    total = 0.0
    for i, j in pairs:
        total += a[i][j]
    return Assignment(
        pairs=pairs,
        unmatched_rows=tuple(i for i in range(rows) if i not in matched_rows),
        unmatched_cols=tuple(j for j in range(cols) if j not in matched_cols),
        total_cost=total,
    )


def match_cost(
    pred: Polyline,
    gt: Polyline,
    class_weight: float = 1.0,
    distance: DistanceKind = DistanceKind.CHAMFER,
    policy: ResamplePolicy = ResamplePolicy.DUPLICATE_ENDPOINT,
) -> float:
    """Geometric distance plus ``class_weight`` when the class labels differ.

    Coordinates are used as given; pass normalized polylines to get the
    normalized-coordinate cost.  EMD needs equal point counts, so both sides are
    resampled to three points first.
    """
    distance = DistanceKind(distance)
    if distance is DistanceKind.CHAMFER:
        geo = chamfer_distance(pred, gt)
    else:
        geo = emd_distance(resample_to_three(pred, policy), resample_to_three(gt, policy))
    return geo + class_weight * float(pred.label != gt.label)


def match_polylines(
    preds: Sequence[Polyline],
    gts: Sequence[Polyline],
    class_weight: float = 1.0,
    distance: DistanceKind = DistanceKind.CHAMFER,
) -> Assignment:
    """Set-prediction matching: Hungarian assignment over :func:`match_cost`."""
    if not preds or not gts:
        return Assignment((), tuple(range(len(preds))), tuple(range(len(gts))), 0.0)
    cost = [[match_cost(p, g, class_weight, distance) for g in gts] for p in preds]
    return hungarian_solve(cost)
