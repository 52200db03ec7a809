"""Domain types shared across the toolkit.

All types are immutable value objects. Constructors validate their invariants
and raise :class:`ValidationError` listing every violated one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

PROTOCOL_VERSION = "mhp-eval/1.0 (part-miou greedy match, all-point AP, pooled PR)"


class ValidationError(ValueError):
    """Raised when a value violates one or more domain invariants."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class InvalidInputError(ValueError):
    """Raised when an operation receives arguments outside its contract."""


def round_half_away(x: float) -> int:
    """Round to nearest integer, ties away from zero."""
    if x >= 0:
        return int(math.floor(x + 0.5))
    return -int(math.floor(-x + 0.5))


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CategorySet:
    count: int
    names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        problems = []
        if not isinstance(self.count, (int, np.integer)) or isinstance(self.count, bool):
            problems.append(f"count: must be an integer, got {self.count!r}")
        elif not 2 <= self.count <= 256:
            problems.append(f"count: must be in [2, 256], got {self.count}")
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))
            if len(self.names) != self.count:
                problems.append(f"names: expected {self.count} names, got {len(self.names)}")
            elif self.names[0] != "background":
                problems.append(f"names: category 0 must be 'background', got {self.names[0]!r}")
        if problems:
            raise ValidationError(problems)

    @classmethod
    def default(cls, count: int) -> "CategorySet":
        return cls(count, ("background",) + tuple(f"part_{i}" for i in range(1, count)))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in continuous pixel coordinates, half-open."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        problems = []
        for name in ("x1", "y1", "x2", "y2"):
            v = getattr(self, name)
            if not math.isfinite(v):
                problems.append(f"{name}: must be finite, got {v!r}")
            object.__setattr__(self, name, float(v))
        if not problems:
            if self.x1 > self.x2:
                problems.append(f"x1: {self.x1} > x2 {self.x2}")
            if self.y1 > self.y2:
                problems.append(f"y1: {self.y1} > y2 {self.y2}")
        if problems:
            raise ValidationError(problems)

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def clip(self, width: float, height: float) -> "Box":
        x1 = min(max(self.x1, 0.0), width)
        x2 = min(max(self.x2, 0.0), width)
        y1 = min(max(self.y1, 0.0), height)
        y2 = min(max(self.y2, 0.0), height)
        return Box(x1, y1, x2, y2)

    def extent(self) -> Tuple[int, int, int, int]:
        """Integer raster extent ``(col0, row0, col1, row1)``, half-open."""
        return (
            round_half_away(self.x1),
            round_half_away(self.y1),
            round_half_away(self.x2),
            round_half_away(self.y2),
        )

    def extent_shape(self) -> Tuple[int, int]:
        """``(height, width)`` of the rounded raster extent."""
        c0, r0, c1, r1 = self.extent()
        return (r1 - r0, c1 - c0)

    def within(self, width: float, height: float) -> bool:
        return self.x1 >= 0 and self.y1 >= 0 and self.x2 <= width and self.y2 <= height


class LabelMap:
    """Dense raster of category ids, stored as an immutable ``uint8`` array of shape (h, w)."""

    __slots__ = ("_data",)

    def __init__(self, data):
        arr = np.asarray(data)
        problems = []
        if arr.ndim != 2:
            problems.append(f"data: expected a 2-d grid, got shape {arr.shape}")
        elif arr.shape[0] < 1 or arr.shape[1] < 1:
            problems.append(f"data: width and height must be positive, got {arr.shape[1]}x{arr.shape[0]}")
        if not problems:
            if arr.dtype != np.uint8:
                if arr.dtype.kind not in "iub":
                    problems.append(f"data: expected integer category ids, got dtype {arr.dtype}")
                elif arr.size and (arr.min() < 0 or arr.max() > 255):
                    problems.append(
                        f"data: category ids must be in [0, 255], got range [{arr.min()}, {arr.max()}]"
                    )
        if problems:
            raise ValidationError(problems)
        self._data = _freeze(arr.astype(np.uint8, copy=False))

    @classmethod
    def zeros(cls, width: int, height: int) -> "LabelMap":
        return cls(np.zeros((height, width), np.uint8))

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def height(self) -> int:
        return self._data.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self._data.shape

    def categories_present(self):
        return np.flatnonzero(np.bincount(self._data.ravel(), minlength=256))

    def check(self, categories: CategorySet, field_name: str = "data") -> None:
        """Raise if any id is outside ``categories``."""
        top = int(self._data.max())
        if top >= categories.count:
            bad = sorted(int(v) for v in np.unique(self._data) if v >= categories.count)
            raise ValidationError(
                f"{field_name}: category ids {bad} not < category count {categories.count}"
            )

    def __eq__(self, other):
        if not isinstance(other, LabelMap):
            return NotImplemented
        return self._data.shape == other._data.shape and np.array_equal(self._data, other._data)

    def __hash__(self):
        return hash((self._data.shape, self._data.tobytes()))

    def __repr__(self):
        return f"LabelMap({self.width}x{self.height})"


class ProbMap:
    """Per-pixel class distribution, immutable float64 array of shape (C, h, w)."""

    __slots__ = ("_data",)

    def __init__(self, data, atol: float = 1e-6):
        arr = np.asarray(data, dtype=np.float64)
        problems = []
        if arr.ndim != 3 or min(arr.shape) < 1:
            problems.append(f"data: expected non-empty (C, h, w) array, got shape {arr.shape}")
        elif not np.all(np.isfinite(arr)):
            problems.append("data: values must be finite")
        elif arr.min() < 0:
            problems.append("data: probabilities must be non-negative")
        else:
            err = np.abs(arr.sum(axis=0) - 1.0).max()
            if err > atol:
                problems.append(f"data: per-pixel sums deviate from 1 by {err:.3g}")
        if problems:
            raise ValidationError(problems)
        self._data = _freeze(arr)

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def channels(self) -> int:
        return self._data.shape[0]

    @property
    def height(self) -> int:
        return self._data.shape[1]

    @property
    def width(self) -> int:
        return self._data.shape[2]

    def __eq__(self, other):
        if not isinstance(other, ProbMap):
            return NotImplemented
        return np.array_equal(self._data, other._data)

    __hash__ = None


def _check_unit(name, v, problems, optional=False):
    if v is None:
        if not optional:
            problems.append(f"{name}: required")
        return
    if not (isinstance(v, (int, float, np.floating, np.integer)) and math.isfinite(v)):
        problems.append(f"{name}: must be a finite real, got {v!r}")
    elif not 0.0 <= v <= 1.0:
        problems.append(f"{name}: must be in [0, 1], got {v!r}")


@dataclass(frozen=True)
class Instance:
    id: int
    box: Box
    cls_score: float
    local_map: LabelMap
    iou_score: Optional[float] = None
    parsing_score: Optional[float] = None

    def __post_init__(self):
        problems = []
        _check_unit("cls_score", self.cls_score, problems)
        _check_unit("iou_score", self.iou_score, problems, optional=True)
        _check_unit("parsing_score", self.parsing_score, problems, optional=True)
        for name in ("cls_score", "iou_score", "parsing_score"):
            v = getattr(self, name)
            if v is not None and not problems:
                object.__setattr__(self, name, float(v))
        if not problems and self.iou_score is not None and self.parsing_score is not None:
            expected = math.sqrt(self.cls_score * self.iou_score)
            if abs(expected - self.parsing_score) > 1e-9:
                problems.append(
                    f"parsing_score: {self.parsing_score} != sqrt(cls_score * iou_score) = {expected}"
                )
        if not isinstance(self.box, Box):
            problems.append(f"box: expected Box, got {type(self.box).__name__}")
        if not isinstance(self.local_map, LabelMap):
            problems.append(f"local_map: expected LabelMap, got {type(self.local_map).__name__}")
        elif isinstance(self.box, Box) and self.local_map.shape != self.box.extent_shape():
            problems.append(
                f"local_map: shape {self.local_map.shape} does not match rounded box extent "
                f"{self.box.extent_shape()} (h, w)"
            )
        if problems:
            raise ValidationError([f"instance {self.id}: {p}" for p in problems])

    @property
    def score(self) -> float:
        """Ranking score: ``parsing_score`` when present, else ``cls_score``."""
        return self.parsing_score if self.parsing_score is not None else self.cls_score

    def replace(self, **changes) -> "Instance":
        values = dict(
            id=self.id,
            box=self.box,
            cls_score=self.cls_score,
            local_map=self.local_map,
            iou_score=self.iou_score,
            parsing_score=self.parsing_score,
        )
        values.update(changes)
        return Instance(**values)


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    width: int
    height: int
    categories: CategorySet
    gt_semantic: LabelMap
    gt_instances: Tuple[Instance, ...] = ()
    pred_instances: Tuple[Instance, ...] = ()
    pred_semantic: Optional[LabelMap] = None
    validate_partition: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "gt_instances", tuple(self.gt_instances))
        object.__setattr__(self, "pred_instances", tuple(self.pred_instances))
        problems = []
        if self.width < 1 or self.height < 1:
            problems.append(f"width/height: must be positive, got {self.width}x{self.height}")
        shape = (self.height, self.width)
        for name in ("gt_semantic", "pred_semantic"):
            m = getattr(self, name)
            if m is None:
                continue
            if m.shape != shape:
                problems.append(f"{name}: shape {m.shape} != image shape {shape}")
            try:
                m.check(self.categories, name)
            except ValidationError as e:
                problems.extend(e.problems)
        for group in ("gt_instances", "pred_instances"):
            seen = set()
            for k, inst in enumerate(getattr(self, group)):
                if inst.id in seen:
                    problems.append(f"{group}[{k}].id: duplicate id {inst.id}")
                seen.add(inst.id)
                if not inst.box.within(self.width, self.height):
                    problems.append(
                        f"{group}[{k}].box: {inst.box.as_tuple()} not clipped to "
                        f"[0,{self.width}]x[0,{self.height}]"
                    )
                try:
                    inst.local_map.check(self.categories, f"{group}[{k}].local_map")
                except ValidationError as e:
                    problems.extend(e.problems)
        if not problems and self.validate_partition and len(self.gt_instances) > 1:
            cover = np.zeros(shape, np.int32)
            for inst in self.gt_instances:
                c0, r0, c1, r1 = inst.box.extent()
                cover[r0:r1, c0:c1] += inst.local_map.data != 0
            if cover.max() > 1:
                problems.append(
                    f"gt_instances: non-background pixels overlap at {int((cover > 1).sum())} pixels"
                )
        if problems:
            raise ValidationError([f"image {self.image_id!r}: {p}" for p in problems])

    def replace(self, **changes) -> "ImageRecord":
        values = {
            name: getattr(self, name)
            for name in (
                "image_id",
                "width",
                "height",
                "categories",
                "gt_semantic",
                "gt_instances",
                "pred_instances",
                "pred_semantic",
            )
        }
        values.update(changes)
        return ImageRecord(**values)
