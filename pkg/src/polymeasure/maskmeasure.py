"""Post-hoc length measurement from label rasters.

Components of a class are thinned to one-pixel skeletons (Zhang-Suen), the
longest path through each skeleton is measured with 8-neighbour step lengths,
and crypt depth is read off a DTW alignment of the villi-shoulder contour to
the crypt-border contour.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra, minimum_spanning_tree

from .dtw import dtw_align
from .geom import PointsLike, as_points

BACKGROUND, VILLI, CRYPT, SHOULDER, BORDER = 0, 1, 2, 3, 4
LABELS = (BACKGROUND, VILLI, CRYPT, SHOULDER, BORDER)
DEFAULT_MIN_AREA = 20


@dataclass(frozen=True)
class LabelMap:
    labels: np.ndarray  # (H, W) uint8

    def __post_init__(self):
        arr = np.array(self.labels, dtype=np.uint8)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"label map must be a non-empty 2-D raster, got shape {arr.shape}")
        if arr.max() > max(LABELS):
            raise ValueError(f"label value {int(arr.max())} outside 0..{max(LABELS)}")
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class Contour:
    """Ordered ``(x, y)`` pixel centres.  ``missing`` marks an absent class."""

    points: np.ndarray
    missing: bool = False

    def __len__(self) -> int:
        return len(self.points)


# -- PGM ---------------------------------------------------------------------


def _pgm_tokens(buf: bytes, count: int) -> tuple[list[int], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(buf[start:pos])
    return tokens, pos + 1


def read_pgm(path: Union[str, Path]) -> LabelMap:
    """Read a binary (P5) PGM whose pixel values are label ids."""
    buf = Path(path).read_bytes()
    tokens, pos = _pgm_tokens(buf, 4)
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ValueError(f"{path}: bad PGM header") from exc
    if width <= 0 or height <= 0 or not 0 < maxval < 256:
        raise ValueError(f"{path}: unsupported PGM dimensions/maxval {width}x{height}/{maxval}")
    data = buf[pos : pos + width * height]
    if len(data) != width * height:
        raise ValueError(f"{path}: expected {width * height} pixels, found {len(data)}")
    return LabelMap(np.frombuffer(data, dtype=np.uint8).reshape(height, width))


def write_pgm(path: Union[str, Path], m: LabelMap) -> None:
    header = f"P5\n{m.width} {m.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + m.labels.tobytes())


# -- components and thinning -------------------------------------------------


def connected_components(m: LabelMap, label: int, min_area: int = DEFAULT_MIN_AREA) -> list[np.ndarray]:
    """8-connected components of ``label`` with at least ``min_area`` pixels.

    Each component is an ``(n, 2)`` array of ``(row, col)`` in raster order;
    components are ordered by their first pixel in raster order.
    """
    mask = m.labels == label
    lab, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    comps = []
    for k in range(1, n + 1):
        pix = np.argwhere(lab == k)
        if len(pix) >= min_area:
            comps.append(pix)
    comps.sort(key=lambda p: (p[0, 0], p[0, 1]))
    return comps


def _neighbours(img: np.ndarray) -> list[np.ndarray]:
    """P2..P9 of the Zhang-Suen neighbourhood (N, NE, E, SE, S, SW, W, NW)."""
    p = np.pad(img, 1)
    h, w = img.shape
    offsets = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]
    return [p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w] for dy, dx in offsets]


def zhang_suen(mask: np.ndarray) -> np.ndarray:
    """Zhang-Suen thinning of a boolean raster."""
    img = np.asarray(mask, dtype=np.uint8).copy()
    while True:
        changed = False
        for step in (0, 1):
            P = _neighbours(img)
            b = sum(P)
            seq = P + [P[0]]
            a = sum(((seq[k] == 0) & (seq[k + 1] == 1)).astype(np.uint8) for k in range(8))
            p2, p4, p6, p8 = P[0], P[2], P[4], P[6]
            if step == 0:
                c1, c2 = p2 * p4 * p6, p4 * p6 * p8
            else:
                c1, c2 = p2 * p4 * p8, p2 * p6 * p8
            kill = (img == 1) & (b >= 2) & (b <= 6) & (a == 1) & (c1 == 0) & (c2 == 0)
            if kill.any():
                img[kill] = 0
                changed = True
        if not changed:
            return img.astype(bool)


def _longest_path(pix: np.ndarray) -> np.ndarray:
    """Longest path through an 8-connected pixel set, as ``(row, col)`` pixels.

    The skeleton graph (edge weights 1 or sqrt(2)) is reduced to its minimum
    spanning tree, which drops the redundant diagonals at corners; the tree's
    weighted diameter is then found with two Dijkstra sweeps.
    """
    n = len(pix)
    if n == 1:
        return pix
    index = {tuple(p): k for k, p in enumerate(pix)}
    rows, cols, wts = [], [], []
    for k, (r, c) in enumerate(pix):
        for dr, dc in ((0, 1), (1, -1), (1, 0), (1, 1)):
            j = index.get((r + dr, c + dc))
            if j is not None:
                rows.append(k)
                cols.append(j)
                wts.append(math.sqrt(2.0) if dr and dc else 1.0)
    graph = coo_matrix((wts, (rows, cols)), shape=(n, n)).tocsr()
    tree = minimum_spanning_tree(graph)
    tree = tree + tree.T
    d0 = dijkstra(tree, indices=0)
    u = int(np.argmax(np.where(np.isfinite(d0), d0, -1)))
    du, pred = dijkstra(tree, indices=u, return_predecessors=True)
    v = int(np.argmax(np.where(np.isfinite(du), du, -1)))
    path = [v]
    while path[-1] != u:
        path.append(int(pred[path[-1]]))
    return pix[path[::-1]]


def skeletonize(component: np.ndarray) -> Contour:
    """Thin a component and return its longest skeleton path as ``(x, y)`` points.

    The path starts at the end with the smaller ``(x, y)``.
    """
    pix = np.asarray(component, dtype=int).reshape(-1, 2)
    if len(pix) == 0:
        raise ValueError("skeletonize needs a non-empty component")
    r0, c0 = pix.min(axis=0)
    box = np.zeros(tuple(pix.max(axis=0) - (r0, c0) + 1), dtype=bool)
    box[pix[:, 0] - r0, pix[:, 1] - c0] = True
    skel = np.argwhere(zhang_suen(box))
    if len(skel) == 0:
        skel = pix[:1] - (r0, c0)
    path = _longest_path(skel) + (r0, c0)
    xy = path[:, ::-1].astype(float)
    if tuple(xy[-1]) < tuple(xy[0]):
        xy = xy[::-1]
    return Contour(xy)


def skeleton_length(c: Union[Contour, PointsLike]) -> float:
    """Sum of step lengths along the contour: 1 axial, sqrt(2) diagonal."""
    pts = c.points if isinstance(c, Contour) else as_points(c)
    total = 0.0
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        total += math.hypot(x1 - x0, y1 - y0)
    return total


def extract_class_contour(m: LabelMap, label: int) -> Contour:
    """Skeleton path of the largest region of ``label`` (shoulder or border).

    An absent class yields an empty contour with ``missing=True``.
    """
    comps = connected_components(m, label, min_area=1)
    if not comps:
        return Contour(np.zeros((0, 2)), missing=True)
    largest = max(comps, key=len)
    return skeletonize(largest)


# -- crypt depth -------------------------------------------------------------


@dataclass(frozen=True)
class DepthSample:
    shoulder: tuple[float, float]
    border: tuple[float, float]
    depth: float


def crypt_depth_profile(shoulder: Union[Contour, PointsLike], border: Union[Contour, PointsLike]) -> list[DepthSample]:
    """Depth at each shoulder point from its DTW-aligned border point(s).

    When DTW pairs a shoulder point with several border points the closest one
    is reported.
    """
    S = shoulder.points if isinstance(shoulder, Contour) else as_points(shoulder)
    B = border.points if isinstance(border, Contour) else as_points(border)
    if len(S) == 0 or len(B) == 0:
        raise ValueError("crypt_depth_profile needs non-empty contours")
    _, path = dtw_align(S, B)
    best: dict[int, tuple[float, int]] = {}
    for i, j in path:
        d = math.hypot(*(S[i] - B[j]))
        if i not in best or d < best[i][0]:
            best[i] = (d, j)
    return [DepthSample(tuple(S[i]), tuple(B[j]), d) for i, (d, j) in sorted(best.items())]


# -- whole-raster measurement --------------------------------------------------


@dataclass
class MaskMeasurement:
    villi_lengths: list = field(default_factory=list)
    crypt_lengths: list = field(default_factory=list)
    crypt_depth: Optional[float] = None

    @property
    def ratio(self) -> Optional[float]:
        if not self.villi_lengths or not self.crypt_lengths:
            return None
        crypt = math.fsum(self.crypt_lengths) / len(self.crypt_lengths)
        if crypt == 0:
            return None
        return (math.fsum(self.villi_lengths) / len(self.villi_lengths)) / crypt


def measure_masks(m: LabelMap, min_area: int = DEFAULT_MIN_AREA) -> MaskMeasurement:
    """Villi and crypt skeleton lengths plus the mean shoulder-to-border depth."""
    out = MaskMeasurement()
    for label, lengths in ((VILLI, out.villi_lengths), (CRYPT, out.crypt_lengths)):
        for comp in connected_components(m, label, min_area):
            lengths.append(skeleton_length(skeletonize(comp)))
    shoulder = extract_class_contour(m, SHOULDER)
    border = extract_class_contour(m, BORDER)
    if not shoulder.missing and not border.missing:
        depths = [s.depth for s in crypt_depth_profile(shoulder, border)]
        out.crypt_depth = math.fsum(depths) / len(depths)
    return out
