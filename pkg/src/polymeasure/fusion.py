"""Reference forward passes for mask-feature mixup and the image-mask fusion blocks.

These are plain numpy evaluations meant for shape and identity checks, not for
training.  Grids are channel-first ``(C, H, W)``.  All convolutions are stride 1
with zero "same" padding.

Weight files are little-endian: magic ``b"PMW1"``, a ``uint32`` tensor count,
then per tensor a ``uint32`` name length, the UTF-8 name, a ``uint32`` rank,
``rank`` ``uint32`` dimensions and the ``float32`` values in C order.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Union

import numpy as np
from scipy.special import erf, expit

from .rng import make_generator

GridLike = Union["FeatureGrid", np.ndarray]


@dataclass(frozen=True)
class FeatureGrid:
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=float)
        if arr.ndim != 3:
            raise ValueError(f"feature grid must be (C, H, W), got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature grid contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def _arr(f: GridLike) -> np.ndarray:
    return f.data if isinstance(f, FeatureGrid) else FeatureGrid(f).data


@dataclass(frozen=True)
class MixupParams:
    delta: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not 0.2 <= self.delta <= 0.4:
            raise ValueError(f"delta must lie in [0.2, 0.4], got {self.delta}")


def sample_lambdas(params: MixupParams, n: int) -> np.ndarray:
    """Draw ``n`` values from Beta(delta, delta) with Johnk's two-uniform method.

    Johnk's acceptance test is exact for shape parameters below one.  Work is
    done in log space; draws that round to 0 or 1 are pulled to the nearest
    representable interior value so the support stays open.
    """
    rng = make_generator(params.seed)
    inv = 1.0 / params.delta
    out = np.empty(0)
    while out.size < n:
        batch = max(16, int(1.2 * (n - out.size)))
        log_x = np.log(rng.random(batch)) * inv
        log_y = np.log(rng.random(batch)) * inv
        ok = np.logaddexp(log_x, log_y) <= 0.0
        out = np.concatenate([out, expit(log_x[ok] - log_y[ok])])
    out = out[:n]
    return np.clip(out, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))


def sample_lambda(params: MixupParams) -> float:
    return float(sample_lambdas(params, 1)[0])


def mixup(f_s: GridLike, f_w: GridLike, lam: float) -> FeatureGrid:
    """``lam * f_s + (1 - lam) * f_w``."""
    a, b = _arr(f_s), _arr(f_w)
    if a.shape != b.shape:
        raise ValueError(f"mixup shape mismatch: {a.shape} vs {b.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    return FeatureGrid(lam * a + (1.0 - lam) * b)


# -- convolution helpers -----------------------------------------------------


def conv1x1(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("oc,chw->ohw", w, x) + b[:, None, None]


def depthwise3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Depthwise 3x3 convolution; output channel ``o`` reads input ``o // mult``.

    ``w`` has shape ``(C * mult, 3, 3)``.
    """
    c, h, wd = x.shape
    if w.shape[1:] != (3, 3) or w.shape[0] % c:
        raise ValueError(f"depthwise kernel shape {w.shape} incompatible with {c} channels")
    src = np.repeat(x, w.shape[0] // c, axis=0)
    padded = np.pad(src, ((0, 0), (1, 1), (1, 1)))
    out = np.zeros_like(src)
    for dy in range(3):
        for dx in range(3):
            out += w[:, dy, dx][:, None, None] * padded[:, dy : dy + h, dx : dx + wd]
    return out + b[:, None, None]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


# -- blocks ------------------------------------------------------------------


@dataclass(frozen=True)
class FEWeights:
    """Two 1x1 convolutions (``C -> E -> C``) then a depthwise 3x3 on ``C`` channels."""

    conv1_w: np.ndarray  # (E, C)
    conv1_b: np.ndarray  # (E,)
    conv2_w: np.ndarray  # (C, E)
    conv2_b: np.ndarray  # (C,)
    dw_w: np.ndarray  # (C, 3, 3)
    dw_b: np.ndarray  # (C,)

    @classmethod
    def zeros(cls, channels: int, hidden: int | None = None) -> "FEWeights":
        e = hidden or channels
        return cls(
            np.zeros((e, channels)), np.zeros(e), np.zeros((channels, e)), np.zeros(channels),
            np.zeros((channels, 3, 3)), np.zeros(channels),
        )

    @classmethod
    def random(cls, channels: int, rng: np.random.Generator, hidden: int | None = None, scale: float = 1.0):
        z = cls.zeros(channels, hidden)
        return cls(*(rng.uniform(-scale, scale, getattr(z, f.name).shape) for f in fields(cls)))

    def check(self, channels: int) -> None:
        e = self.conv1_w.shape[0]
        expected = {
            "conv1_w": (e, channels), "conv1_b": (e,), "conv2_w": (channels, e),
            "conv2_b": (channels,), "dw_w": (channels, 3, 3), "dw_b": (channels,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"FE weight {name} has shape {getattr(self, name).shape}, expected {shape}")


def fe_forward(f: GridLike, weights: FEWeights) -> FeatureGrid:
    """Inverted-residual extractor: ``relu(dw(relu(conv(conv(f))))) + f``."""
    x = _arr(f)
    weights.check(x.shape[0])
    h = conv1x1(x, weights.conv1_w, weights.conv1_b)
    h = relu(conv1x1(h, weights.conv2_w, weights.conv2_b))
    h = relu(depthwise3x3(h, weights.dw_w, weights.dw_b))
    return FeatureGrid(h + x)


@dataclass(frozen=True)
class FMWeights:
    """Depthwise 3x3 expansion ``2C -> 8C`` and a 1x1 projection ``4C -> C``."""

    dw_w: np.ndarray  # (8C, 3, 3)
    dw_b: np.ndarray  # (8C,)
    proj_w: np.ndarray  # (C, 4C)
    proj_b: np.ndarray  # (C,)

    @classmethod
    def zeros(cls, channels: int) -> "FMWeights":
        c = channels
        return cls(np.zeros((8 * c, 3, 3)), np.zeros(8 * c), np.zeros((c, 4 * c)), np.zeros(c))

    @classmethod
    def random(cls, channels: int, rng: np.random.Generator, scale: float = 1.0) -> "FMWeights":
        z = cls.zeros(channels)
        return cls(*(rng.uniform(-scale, scale, getattr(z, f.name).shape) for f in fields(cls)))

    def check(self, channels: int) -> None:
        c = channels
        expected = {"dw_w": (8 * c, 3, 3), "dw_b": (8 * c,), "proj_w": (c, 4 * c), "proj_b": (c,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"FM weight {name} has shape {getattr(self, name).shape}, expected {shape}")


def fm_forward(f_i: GridLike, f_m: GridLike, weights: FMWeights) -> FeatureGrid:
    """Merge image and mask features into a grid shaped like ``f_i``.

    Concatenate along channels, expand 4x with a depthwise 3x3, split the result
    into two halves, gate the second half with GELU of the first, project back
    to ``C`` channels with a 1x1 convolution.
    """
    a, b = _arr(f_i), _arr(f_m)
    if a.shape != b.shape:
        raise ValueError(f"image/mask feature shapes differ: {a.shape} vs {b.shape}")
    c = a.shape[0]
    weights.check(c)
    expanded = depthwise3x3(np.concatenate([a, b]), weights.dw_w, weights.dw_b)
    first, second = expanded[: 4 * c], expanded[4 * c :]
    return FeatureGrid(conv1x1(gelu(first) * second, weights.proj_w, weights.proj_b))


# -- weight files ------------------------------------------------------------

_MAGIC = b"PMW1"


def save_weights(path: Union[str, Path], tensors: dict) -> None:
    parts = [_MAGIC, struct.pack("<I", len(tensors))]
    for name, value in tensors.items():
        arr = np.ascontiguousarray(value, dtype="<f4")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_weights(path: Union[str, Path]) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:4] != _MAGIC:
        raise ValueError(f"{path}: not a weight file")
    (count,), pos = struct.unpack_from("<I", buf, 4), 8
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", buf, pos)
        name = buf[pos + 4 : pos + 4 + nlen].decode("utf-8")
        pos += 4 + nlen
        (ndim,) = struct.unpack_from("<I", buf, pos)
        shape = struct.unpack_from(f"<{ndim}I", buf, pos + 4)
        pos += 4 + 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        out[name] = np.frombuffer(buf, dtype="<f4", count=size, offset=pos).reshape(shape).astype(float)
        pos += 4 * size
    if pos != len(buf):
        raise ValueError(f"{path}: {len(buf) - pos} trailing bytes")
    return out


def fe_weights_from(tensors: dict) -> FEWeights:
    return FEWeights(**{f.name: tensors[f.name] for f in fields(FEWeights)})


def fm_weights_from(tensors: dict) -> FMWeights:
    return FMWeights(**{f.name: tensors[f.name] for f in fields(FMWeights)})
