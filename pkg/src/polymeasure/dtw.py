"""Dynamic time warping between two ordered point sequences.

Steps are (1, 0), (0, 1) and (1, 1); the local cost is the Euclidean distance
between the paired points.  The same alignment drives the DTW loss and the
shoulder-to-border crypt-depth profile.
"""
from __future__ import annotations

import math


from .geom import PointsLike, as_points


def dtw_align(a: PointsLike, b: PointsLike) -> tuple[float, list[tuple[int, int]]]:
    """Return the minimal cumulative cost and the optimal warping path.

    The path runs from ``(0, 0)`` to ``(len(a) - 1, len(b) - 1)``.  Traceback ties
    prefer the diagonal step, then a step in ``a``, then a step in ``b``.
    """
    A, B = as_points(a), as_points(b)
    n, m = len(A), len(B)
    if n == 0 or m == 0:
        raise ValueError("dtw_align needs non-empty sequences")
    local = [[math.hypot(ax - bx, ay - by) for bx, by in B.tolist()] for ax, ay in A.tolist()]

    inf = math.inf
    D = [[inf] * (m + 1) for _ in range(n + 1)]
    D[0][0] = 0.0
    for i in range(1, n + 1):
        prev, cur, row = D[i - 1], D[i], local[i - 1]
        for j in range(1, m + 1):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = row[j - 1] + best

    path = [(n - 1, m - 1)]
    i, j = n, m
    while (i, j) != (1, 1):
        candidates = ((D[i - 1][j - 1], i - 1, j - 1), (D[i - 1][j], i - 1, j), (D[i][j - 1], i, j - 1))
        _, i, j = min(candidates, key=lambda t: t[0])
        path.append((i - 1, j - 1))
    path.reverse()
    return D[n][m], path
