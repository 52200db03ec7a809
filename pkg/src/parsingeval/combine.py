"""Semantic maps from three inference modes.

(a) the global part segmentation, (b) the instance-level map rendered from
score-filtered instances, and (c) their pixel-wise OR where the instance label
wins any non-background conflict.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import ImageRecord, InvalidInputError, LabelMap
from .geometry import paste_instances
from .parallel import pmap
from .semantic import ConfusionMatrix, SemanticMetrics, pixel_confusion, scores

DEFAULT_SCORE_THRESHOLD = 0.5
MODES = ("global", "instance", "combine")


def render_instance_semantic(rec: ImageRecord, score_threshold: float = DEFAULT_SCORE_THRESHOLD,
                             cls_fallback: bool = False) -> LabelMap:
    """Paste every prediction scoring at least ``score_threshold`` onto a background canvas.

    Predictions need a parsing_score unless ``cls_fallback`` allows ranking
    unscored ones by cls_score.
    """
    if not cls_fallback:
        missing = [p.id for p in rec.pred_instances if p.parsing_score is None]
        if missing:
            raise InvalidInputError(f"image {rec.image_id!r}: predictions {missing} have no parsing_score")
    keep = [p for p in rec.pred_instances if p.score >= score_threshold]
    return paste_instances(rec.width, rec.height, keep)


def combine_or(global_map: LabelMap, instance_map: LabelMap) -> LabelMap:
    if global_map.shape != instance_map.shape:
        raise InvalidInputError(f"map shapes differ: {global_map.shape} vs {instance_map.shape}")
    b = instance_map.data
    return LabelMap(np.where(b != 0, b, global_map.data))


@dataclass(frozen=True)
class ImageMaps:
    image_id: str
    global_map: Optional[LabelMap]
    instance_map: LabelMap
    combined: Optional[LabelMap]

    def by_mode(self) -> Dict[str, Optional[LabelMap]]:
        return {"global": self.global_map, "instance": self.instance_map, "combine": self.combined}


@dataclass(frozen=True)
class CombineResult:
    maps: List[ImageMaps]
    metrics: Dict[str, SemanticMetrics]
    warnings: List[str]


def combine_image(rec: ImageRecord, score_threshold: float = DEFAULT_SCORE_THRESHOLD,
                  cls_fallback: bool = False) -> ImageMaps:
    b = render_instance_semantic(rec, score_threshold, cls_fallback)
    a = rec.pred_semantic
    return ImageMaps(rec.image_id, a, b, None if a is None else combine_or(a, b))


def combine_dataset(records: Sequence[ImageRecord], score_threshold: float = DEFAULT_SCORE_THRESHOLD,
                    ignore_background: bool = False, threads: int = 1, cls_fallback: bool = False) -> CombineResult:
    if not len(records):
        raise InvalidInputError("no images")

    def work(rec):
        maps = combine_image(rec, score_threshold, cls_fallback)
        n = rec.categories.count
        cms = {
            mode: pixel_confusion(m, rec.gt_semantic, n)
            for mode, m in maps.by_mode().items()
            if m is not None
        }
        return maps, cms

    done = pmap(work, records, threads)
    n = records[0].categories.count
    missing = [maps.image_id for maps, _ in done if maps.global_map is None]
    warnings = []
    modes = list(MODES)
    if missing:
        warnings.append(f"pred_semantic missing for {len(missing)} image(s) ({', '.join(missing[:5])}"
                        f"{', ...' if len(missing) > 5 else ''}); global and combine rows omitted")
        modes = ["instance"]
    metrics = {}
    for mode in modes:
        total = ConfusionMatrix.empty(n)
        for _, cms in done:
            total = total.merge(cms[mode])
        metrics[mode] = scores(total, ignore_background)
    return CombineResult([maps for maps, _ in done], metrics, warnings)
