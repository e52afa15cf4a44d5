"""Annotation and prediction files.

One JSON document per image::

    {"image": {"id": "img-001", "width": 640, "height": 640},
     "annotations": [{"class": "villi", "points": [[x, y], ...], "confidence": 0.9}],
     "shoulder": [[x, y], ...],
     "border": [[x, y], ...]}

A file holds either a single document or one document per line (JSON lines).
A directory is read as all of its ``*.json`` / ``*.jsonl`` files in name order.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union


from .geom import PolyClass, Polyline

log = logging.getLogger(__name__)

CLASS_NAMES = {c.value: c for c in PolyClass}
_TOP_FIELDS = {"image", "annotations", "shoulder", "border"}
_IMAGE_FIELDS = {"id", "width", "height"}
_ANN_FIELDS = {"class", "points", "confidence"}


class SchemaError(ValueError):
    """A record failed validation; ``field`` is a path like ``[2].annotations[0].points``."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ImageRecord:
    id: str
    width: int
    height: int
    polylines: tuple[Polyline, ...] = ()
    shoulder: Optional[tuple[tuple[float, float], ...]] = None
    border: Optional[tuple[tuple[float, float], ...]] = None

    def of_class(self, label: PolyClass) -> list[Polyline]:
        return [p for p in self.polylines if p.label is label]


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SchemaError(where, f"expected a finite number, got {value!r}")
    return float(value)


def _points(value, where: str, width: int, height: int, lo: int = 1, hi: Optional[int] = None):
    if not isinstance(value, list):
        raise SchemaError(where, "expected a list of [x, y] pairs")
    if len(value) < lo or (hi is not None and len(value) > hi):
        expected = f"{lo}-{hi}" if hi is not None else f">= {lo}"
        raise SchemaError(where, f"expected {expected} points, got {len(value)}")
    out = []
    clamped = False
    for k, pt in enumerate(value):
        if not isinstance(pt, list) or len(pt) != 2:
            raise SchemaError(f"{where}[{k}]", "expected an [x, y] pair")
        x, y = (_number(c, f"{where}[{k}]") for c in pt)
        cx, cy = min(max(x, 0.0), float(width)), min(max(y, 0.0), float(height))
        clamped |= (cx, cy) != (x, y)
        out.append((cx, cy))
    if clamped:
        log.warning("%s: points clamped to the %dx%d image", where, width, height)
    return tuple(out)


def _warn_unknown(obj: dict, known: set, where: str) -> None:
    for key in sorted(set(obj) - known):
        log.warning("%s: ignoring unknown field %r", where, key)


def record_from_dict(obj, where: str = "") -> ImageRecord:
    if not isinstance(obj, dict):
        raise SchemaError(where or "<record>", "expected a JSON object")
    _warn_unknown(obj, _TOP_FIELDS, where or "<record>")
    image = obj.get("image")
    if not isinstance(image, dict):
        raise SchemaError(f"{where}.image", "missing or not an object")
    _warn_unknown(image, _IMAGE_FIELDS, f"{where}.image")
    for key in ("id", "width", "height"):
        if key not in image:
            raise SchemaError(f"{where}.image.{key}", "missing required field")
    image_id = image["id"]
    if not isinstance(image_id, str) or not image_id:
        raise SchemaError(f"{where}.image.id", "expected a non-empty string")
    dims = []
    for key in ("width", "height"):
        v = image[key]
        if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
            raise SchemaError(f"{where}.image.{key}", f"expected a positive integer, got {v!r}")
        dims.append(v)
    width, height = dims

    anns = obj.get("annotations", [])
    if not isinstance(anns, list):
        raise SchemaError(f"{where}.annotations", "expected a list")
    polylines = []
    for k, ann in enumerate(anns):
        at = f"{where}.annotations[{k}]"
        if not isinstance(ann, dict):
            raise SchemaError(at, "expected an object")
        _warn_unknown(ann, _ANN_FIELDS, at)
        if "class" not in ann:
            raise SchemaError(f"{at}.class", "missing required field")
        if ann["class"] not in CLASS_NAMES:
            raise SchemaError(f"{at}.class", f"unknown class {ann['class']!r}; expected one of {sorted(CLASS_NAMES)}")
        if "points" not in ann:
            raise SchemaError(f"{at}.points", "missing required field")
        pts = _points(ann["points"], f"{at}.points", width, height, 2, 4)
        conf = 1.0
        if ann.get("confidence") is not None:
            conf = _number(ann["confidence"], f"{at}.confidence")
            if not 0.0 <= conf <= 1.0:
                raise SchemaError(f"{at}.confidence", f"expected a value in [0, 1], got {conf}")
        polylines.append(Polyline(pts, CLASS_NAMES[ann["class"]], conf))

    curves = {}
    for key in ("shoulder", "border"):
        value = obj.get(key)
        curves[key] = None if value is None else _points(value, f"{where}.{key}", width, height)
    return ImageRecord(image_id, width, height, tuple(polylines), curves["shoulder"], curves["border"])


def record_to_dict(rec: ImageRecord) -> dict:
    anns = []
    for p in rec.polylines:
        ann = {"class": p.label.value, "points": [[x, y] for x, y in p.points]}
        if p.confidence != 1.0:
            ann["confidence"] = p.confidence
        anns.append(ann)
    out = {"image": {"id": rec.id, "width": rec.width, "height": rec.height}, "annotations": anns}
    for key in ("shoulder", "border"):
        curve = getattr(rec, key)
        if curve is not None:
            out[key] = [[x, y] for x, y in curve]
    return out


def _documents(path: Path) -> Iterable[tuple[str, object]]:
    text = path.read_text(encoding="utf-8")
    stripped = text.strip()
    if not stripped:
        return
    try:
        yield path.name, json.loads(stripped)
        return
    except json.JSONDecodeError:
        pass
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.strip():
            try:
                yield f"{path.name}:{lineno}", json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path.name}:{lineno}", f"malformed JSON ({exc.msg})") from exc


def parse_records(path: Union[str, Path]) -> list[ImageRecord]:
    """Read and validate every record under ``path`` (file or directory)."""
    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.suffix in (".json", ".jsonl")) if path.is_dir() else [path]
    records = []
    for f in files:
        for _, doc in _documents(f):
            records.append(record_from_dict(doc, f"[{len(records)}]"))
    return records


def dumps_records(records: Iterable[ImageRecord]) -> str:
    return "".join(json.dumps(record_to_dict(r), separators=(",", ":")) + "\n" for r in records)


def write_records(path: Union[str, Path], records: Iterable[ImageRecord]) -> None:
    Path(path).write_text(dumps_records(records), encoding="utf-8")

