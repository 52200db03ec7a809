"""Parsing re-scoring: mIoU regression targets, score fusion, top-K
selection and the calibration analysis of scores against true quality."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from .core import ImageRecord, Instance, InvalidInputError, LabelMap
from .geometry import crop_label_map
from . import kernels
from .instance import _greedy, _part_ious, miou_matrix
from .parallel import pmap

DEFAULT_TOPK = 100
_FUSE_SLACK = 1e-6


def miou_target(pred: Instance, gt_semantic: LabelMap) -> float:
    """mIoU between the predicted local map and the ground truth cropped at the predicted box.

    The crop follows the predicted box as-is; misaligned boxes are not corrected.
    """
    crop = crop_label_map(gt_semantic, pred.box)
    per_part = _part_ious(*kernels.pair_overlap(pred.local_map.data, 0, 0, crop.data, 0, 0, 256))
    return sum(per_part.values()) / len(per_part) if per_part else 0.0


def _unit(name, x):
    if not (math.isfinite(x) and -_FUSE_SLACK <= x <= 1 + _FUSE_SLACK):
        raise InvalidInputError(f"{name} must be in [0, 1], got {x!r}")
    return min(max(float(x), 0.0), 1.0)


def fuse_scores(cls: float, iou: float) -> float:
    """Geometric mean of classification and predicted-mIoU scores."""
    a, b = _unit("cls", cls), _unit("iou", iou)
    if a == b:
        return a
    prod = a * b
    # very small scores: the product underflows, take the roots separately
    r = math.sqrt(prod) if prod >= 1e-300 else math.sqrt(a) * math.sqrt(b)
    # the geometric mean lies between its arguments; clamp away rounding
    return min(max(r, min(a, b)), max(a, b))


def topk(preds: Sequence[Instance], k: int) -> Tuple[Instance, ...]:
    """The ``k`` best predictions by cls_score (ties: lower id first), in input order."""
    keep = sorted(range(len(preds)), key=lambda i: (-preds[i].cls_score, preds[i].id))[:k]
    return tuple(preds[i] for i in sorted(keep))


def rescore_image(rec: ImageRecord, k: int = DEFAULT_TOPK, oracle: bool = False) -> ImageRecord:
    survivors = topk(rec.pred_instances, k)
    if not oracle:
        missing = [p.id for p in survivors if p.iou_score is None]
        if missing:
            raise InvalidInputError(f"image {rec.image_id!r}: predictions {missing} have no iou_score")
    out = []
    for p in survivors:
        iou = miou_target(p, rec.gt_semantic) if oracle else p.iou_score
        out.append(p.replace(iou_score=iou, parsing_score=fuse_scores(p.cls_score, iou)))
    return rec.replace(pred_instances=tuple(out))


def rescore_dataset(records: Sequence[ImageRecord], k: int = DEFAULT_TOPK, oracle: bool = False, threads: int = 1):
    """Keep the top-``k`` predictions per image and attach fused parsing scores.

    In ``oracle`` mode the iou_score of every survivor is replaced by its true
    :func:`miou_target`, so the pipeline runs without a trained regressor.
    """
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    return pmap(lambda r: rescore_image(r, k, oracle), records, threads)


@dataclass(frozen=True)
class Correlation:
    """Correlation coefficient; ``value`` is None when undefined (zero variance)."""

    value: Optional[float]

    @property
    def defined(self) -> bool:
        return self.value is not None

    def to_json(self):
        return "undefined" if self.value is None else round(self.value, 6)


UNDEFINED = Correlation(None)


def pearson(x, y) -> Correlation:
    x = np.asarray(x, np.float64)
    y = np.asarray(y, np.float64)
    if len(x) != len(y):
        raise InvalidInputError("pearson: length mismatch")
    if len(x) < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return UNDEFINED
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return UNDEFINED
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return Correlation(min(max(r, -1.0), 1.0))


def spearman(x, y) -> Correlation:
    return pearson(rankdata(x), rankdata(y))


@dataclass(frozen=True)
class CalibrationRow:
    image_id: str
    pred_id: int
    gt_miou: float
    cls_score: float
    iou_score: Optional[float]
    parsing_score: Optional[float]


@dataclass(frozen=True)
class CalibrationReport:
    rows: Tuple[CalibrationRow, ...]
    pearson_cls: Correlation
    spearman_cls: Correlation
    pearson_parsing: Correlation
    spearman_parsing: Correlation
    pearson_iou: Correlation
    spearman_iou: Correlation

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["image_id", "pred_id", "gt_miou", "cls_score", "iou_score", "parsing_score"])
        fmt = lambda v: "" if v is None else f"{v:.6f}"
        for r in self.rows:
            w.writerow([r.image_id, r.pred_id, fmt(r.gt_miou), fmt(r.cls_score), fmt(r.iou_score), fmt(r.parsing_score)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "instances": len(self.rows),
            "pearson": {
                "gt_miou_vs_cls_score": self.pearson_cls.to_json(),
                "gt_miou_vs_parsing_score": self.pearson_parsing.to_json(),
                "gt_miou_vs_iou_score": self.pearson_iou.to_json(),
            },
            "spearman": {
                "gt_miou_vs_cls_score": self.spearman_cls.to_json(),
                "gt_miou_vs_parsing_score": self.spearman_parsing.to_json(),
                "gt_miou_vs_iou_score": self.spearman_iou.to_json(),
            },
        }


def _calibration_rows(rec: ImageRecord):
    preds, gts = rec.pred_instances, rec.gt_instances
    ious = miou_matrix(preds, gts, (rec.width, rec.height))
    mr = _greedy(preds, gts, ious, 0.0)
    col = {g.id: j for j, g in enumerate(gts)}
    row = {p.id: i for i, p in enumerate(preds)}
    out = []
    for p in preds:
        e = next(e for e in mr.entries if e.pred_id == p.id)
        miou = 0.0 if e.gt_id is None else float(ious[row[p.id], col[e.gt_id]])
        parsing = p.parsing_score
        if parsing is None and p.iou_score is not None:
            parsing = fuse_scores(p.cls_score, p.iou_score)
        out.append(CalibrationRow(rec.image_id, p.id, miou, p.cls_score, p.iou_score, parsing))
    return out


def _pair(rows, attr, fn):
    sel = [r for r in rows if getattr(r, attr) is not None]
    return fn([r.gt_miou for r in sel], [getattr(r, attr) for r in sel])


def calibration(records: Sequence[ImageRecord], threads: int = 1) -> CalibrationReport:
    """Relate each prediction's true mIoU to its scores.

    Predictions are matched to ground truths at threshold 0; unmatched ones
    get a true mIoU of 0.
    """
    rows = tuple(r for chunk in pmap(_calibration_rows, records, threads) for r in chunk)
    if len(rows) < 3:
        raise InvalidInputError(f"calibration needs at least 3 predictions, got {len(rows)}")
    return CalibrationReport(
        rows=rows,
        pearson_cls=_pair(rows, "cls_score", pearson),
        spearman_cls=_pair(rows, "cls_score", spearman),
        pearson_parsing=_pair(rows, "parsing_score", pearson),
        spearman_parsing=_pair(rows, "parsing_score", spearman),
        pearson_iou=_pair(rows, "iou_score", pearson),
        spearman_iou=_pair(rows, "iou_score", spearman),
    )
