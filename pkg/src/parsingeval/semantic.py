"""Confusion-matrix based semantic segmentation scores."""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Optional, Tuple

import numpy as np

from . import kernels
from .core import InvalidInputError, LabelMap, ValidationError, _freeze


class ConfusionMatrix:
    """``counts[g, p]`` = number of pixels with ground truth g predicted as p."""

    __slots__ = ("_counts",)

    def __init__(self, counts):
        arr = np.asarray(counts)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 2:
            raise ValidationError(f"counts: expected a square C x C matrix with C >= 2, got {arr.shape}")
        if arr.dtype.kind not in "iu" or (arr.size and arr.min() < 0):
            raise ValidationError("counts: must be non-negative integers")
        self._counts = _freeze(arr.astype(np.int64))

    @classmethod
    def empty(cls, num_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((num_classes, num_classes), np.int64))

    @property
    def counts(self) -> np.ndarray:
        return self._counts

    @property
    def num_classes(self) -> int:
        return self._counts.shape[0]

    @property
    def total(self) -> int:
        return int(self._counts.sum())

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise InvalidInputError(f"cannot merge {self.num_classes}- and {other.num_classes}-class matrices")
        return ConfusionMatrix(self._counts + other._counts)

    def __add__(self, other):
        return self.merge(other)

    def __eq__(self, other):
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return np.array_equal(self._counts, other._counts)

    __hash__ = None

    def __repr__(self):
        return f"ConfusionMatrix(C={self.num_classes}, total={self.total})"


@dataclass(frozen=True)
class SemanticMetrics:
    miou: float
    pixel_acc: float
    mean_acc: float
    per_class_iou: Tuple[Optional[float], ...]

    def __post_init__(self):
        bad = [
            name
            for name, v in (("miou", self.miou), ("pixel_acc", self.pixel_acc), ("mean_acc", self.mean_acc))
            if not 0.0 <= v <= 1.0
        ]
        bad += [f"per_class_iou[{c}]" for c, v in enumerate(self.per_class_iou) if v is not None and not 0.0 <= v <= 1.0]
        if bad:
            raise ValidationError([f"{name}: outside [0, 1]" for name in bad])


def pixel_confusion(pred: LabelMap, gt: LabelMap, num_classes: int) -> ConfusionMatrix:
    if pred.shape != gt.shape:
        raise InvalidInputError(f"prediction shape {pred.shape} != ground-truth shape {gt.shape}")
    top = max(int(pred.data.max()), int(gt.data.max()))
    if top >= num_classes:
        raise InvalidInputError(f"category id {top} not < {num_classes}")
    return ConfusionMatrix(kernels.confusion(gt.data, pred.data, num_classes))


def accumulate(cm: ConfusionMatrix, pred: LabelMap, gt: LabelMap) -> ConfusionMatrix:
    return cm.merge(pixel_confusion(pred, gt, cm.num_classes))


def accumulate_all(pairs: Iterable[Tuple[LabelMap, LabelMap]], num_classes: int) -> ConfusionMatrix:
    """Fold (pred, gt) pairs into one matrix; an empty sequence yields zeros."""
    return reduce(_accumulate_pair, pairs, ConfusionMatrix.empty(num_classes))


def _accumulate_pair(cm, pair):
    pred, gt = pair
    return accumulate(cm, pred, gt)


def scores(cm: ConfusionMatrix, ignore_background: bool = False) -> SemanticMetrics:
    """mIoU, pixel accuracy and mean class accuracy.

    Classes with an empty union are left out of the mIoU mean; classes absent
    from the ground truth are left out of the mean accuracy. With
    ``ignore_background`` class 0 is also dropped from both means (pixel
    accuracy is unaffected).
    """
    counts = cm.counts
    total = counts.sum()
    if total == 0:
        raise InvalidInputError("confusion matrix is empty")
    diag = np.diag(counts)
    rows = counts.sum(axis=1)
    cols = counts.sum(axis=0)
    union = rows + cols - diag
    per_class = [None if u == 0 else float(d / u) for d, u in zip(diag, union)]
    first = 1 if ignore_background else 0
    ious = [v for v in per_class[first:] if v is not None]
    accs = [float(d / r) for d, r in zip(diag[first:], rows[first:]) if r > 0]
    return SemanticMetrics(
        miou=float(np.mean(ious)) if ious else 0.0,
        pixel_acc=float(diag.sum() / total),
        mean_acc=float(np.mean(accs)) if accs else 0.0,
        per_class_iou=tuple(per_class),
    )
