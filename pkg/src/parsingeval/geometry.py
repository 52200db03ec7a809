"""Raster and box operations: IoU, crop, paste, resize, pooling.

Boxes are rasterized in exactly one place, :meth:`Box.extent`, which rounds
each corner half away from zero and treats the result as half-open.
Resizes sample at half-pixel centers: source = (i + 0.5) * in / out - 0.5.
"""

from __future__ import annotations

from typing import Iterable, Tuple

import numpy as np

from . import kernels
from .core import Box, Instance, InvalidInputError, LabelMap, ProbMap, ValidationError, _freeze


class Grid:
    """Single-channel real raster, immutable float64 array of shape (h, w)."""

    __slots__ = ("_data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 2 or min(arr.shape) < 1:
            raise ValidationError(f"data: expected non-empty 2-d grid, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("data: values must be finite")
        self._data = _freeze(arr)

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def height(self) -> int:
        return self._data.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return np.array_equal(self._data, other._data)

    __hash__ = None

    def __repr__(self):
        return f"Grid({self.width}x{self.height})"


def box_iou(a: Box, b: Box) -> float:
    if a.area <= 0 and b.area <= 0:
        raise InvalidInputError(f"box_iou: both boxes are degenerate: {a.as_tuple()}, {b.as_tuple()}")
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    return inter / (a.area + b.area - inter)


def _checked_extent(box: Box, width: int, height: int) -> Tuple[int, int, int, int]:
    c0, r0, c1, r1 = box.extent()
    if c0 < 0 or r0 < 0 or c1 > width or r1 > height:
        raise InvalidInputError(f"box {box.as_tuple()} exceeds raster bounds {width}x{height}")
    if c1 <= c0 or r1 <= r0:
        raise InvalidInputError(f"box {box.as_tuple()} has an empty rounded extent")
    return c0, r0, c1, r1


def crop_label_map(m: LabelMap, box: Box) -> LabelMap:
    c0, r0, c1, r1 = _checked_extent(box, m.width, m.height)
    return LabelMap(m.data[r0:r1, c0:c1])


def paste_order(instances: Iterable[Instance]):
    """Application order for pasting: ascending score, so the best instance is written last.

    On equal scores the lower id is written last and therefore wins.
    """
    return sorted(instances, key=lambda inst: (inst.score, -inst.id))


def paste_into(canvas: np.ndarray, inst: Instance) -> None:
    h, w = canvas.shape
    c0, r0, c1, r1 = _checked_extent(inst.box, w, h)
    if inst.local_map.shape != (r1 - r0, c1 - c0):
        raise InvalidInputError(
            f"instance {inst.id}: local_map shape {inst.local_map.shape} != box extent {(r1 - r0, c1 - c0)}"
        )
    kernels.paste(canvas, inst.local_map.data, r0, c0)


def paste_instances(canvas_w: int, canvas_h: int, instances: Iterable[Instance]) -> LabelMap:
    canvas = np.zeros((canvas_h, canvas_w), np.uint8)
    for inst in paste_order(instances):
        paste_into(canvas, inst)
    return LabelMap(canvas)


def resize_bilinear(g: Grid, out_w: int, out_h: int) -> Grid:
    if out_w < 1 or out_h < 1:
        raise InvalidInputError(f"output size must be positive, got {out_w}x{out_h}")
    out = kernels.resize_bilinear(g.data, out_h, out_w)
    # guard against one-ulp overshoot of the lerp
    np.clip(out, g.data.min(), g.data.max(), out=out)
    return Grid(out)


def resize_prob_map(p: ProbMap, out_w: int, out_h: int) -> ProbMap:
    """Channel-wise bilinear resize; renormalizes away rounding drift."""
    chans = np.stack([resize_bilinear(Grid(c), out_w, out_h).data for c in p.data])
    return ProbMap(chans / chans.sum(axis=0, keepdims=True))


def resize_nearest(m: LabelMap, out_w: int, out_h: int) -> LabelMap:
    if out_w < 1 or out_h < 1:
        raise InvalidInputError(f"output size must be positive, got {out_w}x{out_h}")
    return LabelMap(kernels.resize_nearest(m.data, out_h, out_w))


def max_pool(g: Grid, kernel: int, stride: int) -> Grid:
    if kernel < 1 or stride < 1:
        raise InvalidInputError(f"kernel and stride must be >= 1, got {kernel}, {stride}")
    if kernel != stride:
        raise InvalidInputError(f"only kernel == stride is supported, got kernel={kernel} stride={stride}")
    if g.width % stride or g.height % stride:
        raise InvalidInputError(f"grid {g.width}x{g.height} not divisible by stride {stride}")
    return Grid(kernels.max_pool(g.data, kernel))
