"""Instance-level parsing evaluation: part-wise instance mIoU, greedy
score-ordered matching, AP^p at mIoU thresholds, AP^p_vol and PCP_50.

Predictions from all images are pooled into one ranked list per threshold.
Ranking is by descending score, then ascending instance id, then image id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .core import ImageRecord, Instance, InvalidInputError, ValidationError
from .geometry import _checked_extent
from .parallel import pmap

AP_THRESHOLDS: Tuple[float, ...] = tuple(k / 10 for k in range(1, 10))
PCP_PART_THRESHOLD = 0.5
_NCAT = 256


@dataclass(frozen=True)
class MatchEntry:
    pred_id: int
    gt_id: Optional[int]
    miou: float
    score: float


@dataclass(frozen=True)
class MatchResult:
    threshold: float
    entries: Tuple[MatchEntry, ...]
    num_gt: int

    def __post_init__(self):
        keys = [(-e.score, e.pred_id) for e in self.entries]
        if keys != sorted(keys):
            raise ValidationError("entries: not ordered by descending score, ascending id")
        matched = [e.gt_id for e in self.entries if e.gt_id is not None]
        if len(matched) != len(set(matched)):
            raise ValidationError("entries: a ground truth is matched more than once")

    @property
    def num_matched(self) -> int:
        return sum(e.gt_id is not None for e in self.entries)

    @property
    def unmatched_gt(self) -> int:
        return self.num_gt - self.num_matched


@dataclass(frozen=True)
class InstanceMetrics:
    ap_at: Dict[float, float]
    ap_vol: float
    pcp50: float

    def __post_init__(self):
        if self.ap_at and abs(self.ap_vol - sum(self.ap_at.values()) / len(self.ap_at)) > 1e-12:
            raise ValidationError("ap_vol: not the mean of ap_at")


def _extent(inst: Instance, canvas):
    c0, r0, _, _ = _checked_extent(inst.box, canvas[0], canvas[1])
    return r0, c0


def _default_canvas(*groups):
    xs = [inst.box.extent()[2] for g in groups for inst in g]
    ys = [inst.box.extent()[3] for g in groups for inst in g]
    return (max(xs, default=1), max(ys, default=1))


def _overlap(pred: Instance, gt: Instance, canvas):
    pr, pc = _extent(pred, canvas)
    gr, gc = _extent(gt, canvas)
    return kernels.pair_overlap(pred.local_map.data, pr, pc, gt.local_map.data, gr, gc, _NCAT)


def _part_ious(inter, area_a, area_b) -> Dict[int, float]:
    union = area_a + area_b - inter
    union[0] = 0
    cats = np.flatnonzero(union)
    return {int(c): float(inter[c] / union[c]) for c in cats}


def _mean(values) -> float:
    return sum(values) / len(values) if values else 0.0


def instance_miou(pred: Instance, gt: Instance, canvas=None) -> Tuple[float, Dict[int, float]]:
    """Mean IoU over the non-background categories present in either instance.

    ``canvas`` is ``(width, height)``; both instances must lie inside it.
    Returns ``(miou, {category: iou})``; miou is 0 when no category is present.
    """
    if canvas is None:
        canvas = _default_canvas([pred], [gt])
    per_part = _part_ious(*_overlap(pred, gt, canvas))
    return _mean(list(per_part.values())), per_part


def _disjoint(a: Instance, b: Instance) -> bool:
    ac0, ar0, ac1, ar1 = a.box.extent()
    bc0, br0, bc1, br1 = b.box.extent()
    return ac1 <= bc0 or bc1 <= ac0 or ar1 <= br0 or br1 <= ar0


def miou_matrix(preds: Sequence[Instance], gts: Sequence[Instance], canvas=None) -> np.ndarray:
    """``out[i, j]`` = instance_miou(preds[i], gts[j])."""
    if canvas is None:
        canvas = _default_canvas(preds, gts)
    out = np.zeros((len(preds), len(gts)))
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            if not _disjoint(p, g):
                out[i, j] = instance_miou(p, g, canvas)[0]
    return out


def ranked(preds: Sequence[Instance]) -> List[int]:
    return sorted(range(len(preds)), key=lambda i: (-preds[i].score, preds[i].id))


def _greedy(preds, gts, ious, t) -> MatchResult:
    gt_order = sorted(range(len(gts)), key=lambda j: gts[j].id)
    taken = set()
    entries = []
    for i in ranked(preds):
        best_j, best = None, -1.0
        for j in gt_order:
            if j not in taken and ious[i, j] > best:
                best_j, best = j, ious[i, j]
        # a pair with no overlap at all is never a match, even at t = 0
        if best_j is not None and best >= t and best > 0.0:
            taken.add(best_j)
            gt_id = gts[best_j].id
        else:
            gt_id = None
        entries.append(MatchEntry(preds[i].id, gt_id, max(best, 0.0), preds[i].score))
    return MatchResult(t, tuple(entries), len(gts))


def match(preds: Sequence[Instance], gts: Sequence[Instance], t: float, canvas=None) -> MatchResult:
    """Greedy score-ordered assignment of predictions to ground truths.

    Each prediction, best score first, takes the still-unmatched ground truth
    with the highest instance mIoU (lowest gt id on ties) if that mIoU >= t
    and is positive.
    """
    return _greedy(preds, gts, miou_matrix(preds, gts, canvas), t)


def ap_from_flags(tp: Sequence[bool], total_gt: int) -> float:
    """All-point interpolated AP of a ranked list of true/false positive flags."""
    if total_gt < 0:
        raise InvalidInputError(f"total_gt must be >= 0, got {total_gt}")
    n = len(tp)
    if total_gt == 0:
        return 1.0 if n == 0 else 0.0
    if n == 0:
        return 0.0
    tp_cum = np.cumsum(np.asarray(tp, dtype=np.int64))
    recall = tp_cum / total_gt
    precision = tp_cum / np.arange(1, n + 1)
    mrec = np.concatenate(([0.0], recall))
    mpre = np.concatenate((precision, [0.0]))
    # precision envelope: best precision at any equal-or-higher recall
    mpre = np.maximum.accumulate(mpre[::-1])[::-1][:-1]
    steps = mrec[1:] - mrec[:-1]
    return float(np.sum(steps * mpre))


def average_precision(mr: MatchResult, total_gt: int) -> float:
    return ap_from_flags([e.gt_id is not None for e in mr.entries], total_gt)


def pcp_scores(preds: Sequence[Instance], gts: Sequence[Instance], canvas=None, ious=None) -> List[float]:
    """Per-ground-truth fraction of its part categories parsed with IoU >= 0.5.

    Assignment follows ``match(preds, gts, 0.0)``; unassigned ground truths score 0.
    """
    if canvas is None:
        canvas = _default_canvas(preds, gts)
    if ious is None:
        ious = miou_matrix(preds, gts, canvas)
    mr = _greedy(preds, gts, ious, 0.0)
    pred_by_id = {p.id: p for p in preds}
    assigned = {e.gt_id: pred_by_id[e.pred_id] for e in mr.entries if e.gt_id is not None}
    out = []
    for g in gts:
        gt_parts = [int(c) for c in g.local_map.categories_present() if c != 0]
        p = assigned.get(g.id)
        if p is None or not gt_parts:
            out.append(0.0)
            continue
        per_part = _part_ious(*_overlap(p, g, canvas))
        hits = sum(per_part.get(c, 0.0) >= PCP_PART_THRESHOLD for c in gt_parts)
        out.append(hits / len(gt_parts))
    return out


def pcp50(preds: Sequence[Instance], gts: Sequence[Instance], canvas=None) -> float:
    if not gts:
        raise InvalidInputError("pcp50 needs at least one ground truth")
    return _mean(pcp_scores(preds, gts, canvas))


@dataclass(frozen=True)
class _ImageEval:
    image_id: str
    preds: Tuple[Instance, ...]
    gts: Tuple[Instance, ...]
    ious: np.ndarray
    pcp: Tuple[float, ...]


def _eval_image(rec: ImageRecord) -> _ImageEval:
    canvas = (rec.width, rec.height)
    ious = miou_matrix(rec.pred_instances, rec.gt_instances, canvas)
    pcp = pcp_scores(rec.pred_instances, rec.gt_instances, canvas, ious)
    return _ImageEval(rec.image_id, rec.pred_instances, rec.gt_instances, ious, tuple(pcp))


def pooled_ap(evals: Sequence[_ImageEval], t: float) -> float:
    rows = []
    for ev in evals:
        mr = _greedy(ev.preds, ev.gts, ev.ious, t)
        rows.extend((-e.score, e.pred_id, ev.image_id, e.gt_id is not None) for e in mr.entries)
    rows.sort(key=lambda r: r[:3])
    total_gt = sum(len(ev.gts) for ev in evals)
    return ap_from_flags([r[3] for r in rows], total_gt)


def evaluate_instances(records: Sequence[ImageRecord], thresholds=AP_THRESHOLDS, threads: int = 1) -> InstanceMetrics:
    evals = pmap(_eval_image, records, threads)
    total_gt = sum(len(ev.gts) for ev in evals)
    if total_gt == 0:
        raise InvalidInputError("dataset has no ground-truth instances")
    ap_at = {float(t): pooled_ap(evals, t) for t in thresholds}
    pcp = [s for ev in evals for s in ev.pcp]
    return InstanceMetrics(ap_at=ap_at, ap_vol=sum(ap_at.values()) / len(ap_at), pcp50=math.fsum(pcp) / len(pcp))
