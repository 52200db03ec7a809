"""Loss formulas of the training objective, as pure functions.

Detection losses (RPN, box head) are opaque scalars supplied by the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .core import InvalidInputError, LabelMap, ProbMap, ValidationError

PROB_FLOOR = 1e-12


def _check_nonneg(obj):
    bad = []
    for f in fields(obj):
        v = getattr(obj, f.name)
        if not math.isfinite(v) or v < 0:
            bad.append(f"{f.name}: must be finite and >= 0, got {v!r}")
    if bad:
        raise ValidationError(bad)


@dataclass(frozen=True)
class LossWeights:
    lambda_p: float = 2.0
    lambda_s: float = 2.0
    lambda_r: float = 1.0

    def __post_init__(self):
        _check_nonneg(self)


@dataclass(frozen=True)
class LossBreakdown:
    l_rpn: float
    l_bbox: float
    l_par: float
    l_sem: float
    l_res: float

    def __post_init__(self):
        _check_nonneg(self)


def pixel_cross_entropy(p: ProbMap, gt: LabelMap) -> float:
    """Mean over pixels of -log p[gt], probabilities clamped below at 1e-12."""
    if (p.height, p.width) != gt.shape:
        raise InvalidInputError(f"probability map {p.height}x{p.width} vs labels {gt.shape}")
    labels = gt.data.astype(np.intp)
    if labels.max() >= p.channels:
        raise InvalidInputError(f"label {labels.max()} has no probability channel (C={p.channels})")
    rows, cols = np.indices(labels.shape)
    picked = np.maximum(p.data[labels, rows, cols], PROB_FLOOR)
    return float(-np.log(picked).mean())


def mse(pred, target) -> float:
    """Squared error; for arrays, the mean over pairs."""
    pred = np.asarray(pred, np.float64)
    target = np.asarray(target, np.float64)
    if pred.shape != target.shape:
        raise InvalidInputError(f"shape mismatch {pred.shape} vs {target.shape}")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(target))):
        raise InvalidInputError("mse inputs must be finite")
    return float(np.mean((pred - target) ** 2))


def total_loss(b: LossBreakdown, w: LossWeights = LossWeights()) -> float:
    return b.l_rpn + b.l_bbox + w.lambda_p * b.l_par + w.lambda_s * b.l_sem + w.lambda_r * b.l_res
