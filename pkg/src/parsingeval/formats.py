"""Label-map PNGs, JSON dataset manifests and result reports.

Manifest layout (paths relative to the manifest file)::

    {"categories": {"count": C, "names": [...]},
     "images": [{"id", "width", "height", "gt_semantic", "pred_semantic"?,
                 "gt_instances": [{"id"?, "box": [x1, y1, x2, y2], "map": path}],
                 "predictions": [{"id"?, "box": [...], "cls_score", "iou_score"?,
                                  "parsing_score"?, "map": path}]}]}

Scores are stored rounded to 6 decimals. When a prediction carries both
``iou_score`` and ``parsing_score``, the latter is recomputed on load as
sqrt(cls_score * iou_score) so the fused value stays exact.
"""

from __future__ import annotations

import io
import json
import os
from collections.abc import Sequence as SequenceABC
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import jsonschema
import numpy as np
from PIL import Image

from .core import (
    PROTOCOL_VERSION,
    Box,
    CategorySet,
    ImageRecord,
    Instance,
    InvalidInputError,
    LabelMap,
    ValidationError,
)
from .instance import InstanceMetrics
from .rescoring import fuse_scores
from .semantic import SemanticMetrics


class UnsupportedFormatError(ValueError):
    """Raised for image files that are not 8-bit single-channel PNGs."""


def _palette() -> List[int]:
    # bit-interleaved colour map, the usual convention for segmentation label PNGs
    pal = []
    for i in range(256):
        r = g = b = 0
        c = i
        for j in range(8):
            r |= ((c >> 0) & 1) << (7 - j)
            g |= ((c >> 1) & 1) << (7 - j)
            b |= ((c >> 2) & 1) << (7 - j)
            c >>= 3
        pal.extend((r, g, b))
    return pal


_PALETTE = _palette()


def read_label_map(data: bytes, categories: Optional[CategorySet] = None) -> LabelMap:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as e:  # PIL raises several unrelated types for bad input
        raise UnsupportedFormatError(f"cannot decode image: {e}") from e
    if img.format != "PNG":
        raise UnsupportedFormatError(f"expected PNG, got {img.format}")
    if img.mode not in ("L", "P"):
        raise UnsupportedFormatError(f"expected 8-bit single-channel PNG, got mode {img.mode}")
    m = LabelMap(np.asarray(img, dtype=np.uint8))
    if categories is not None:
        m.check(categories)
    return m


def write_label_map(m: LabelMap) -> bytes:
    img = Image.fromarray(np.ascontiguousarray(m.data), mode="P")
    img.putpalette(_PALETTE)
    buf = io.BytesIO()
    img.save(buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()


def load_label_map(path, categories: Optional[CategorySet] = None) -> LabelMap:
    try:
        return read_label_map(Path(path).read_bytes(), categories)
    except ValidationError as e:
        raise ValidationError([f"{path}: {p}" for p in e.problems]) from None


def save_label_map(path, m: LabelMap) -> None:
    Path(path).write_bytes(write_label_map(m))


# --- manifests -------------------------------------------------------------

_BOX = {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4}
_UNIT = {"type": "number", "minimum": 0, "maximum": 1}

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["categories", "images"],
    "properties": {
        "categories": {
            "type": "object",
            "required": ["count"],
            "properties": {
                "count": {"type": "integer", "minimum": 2, "maximum": 256},
                "names": {"type": "array", "items": {"type": "string"}},
            },
        },
        "images": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "width", "height", "gt_semantic"],
                "properties": {
                    "id": {"type": "string"},
                    "width": {"type": "integer", "minimum": 1},
                    "height": {"type": "integer", "minimum": 1},
                    "gt_semantic": {"type": "string"},
                    "pred_semantic": {"type": "string"},
                    "gt_instances": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["box", "map"],
                            "properties": {"id": {"type": "integer"}, "box": _BOX, "map": {"type": "string"}},
                        },
                    },
                    "predictions": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["box", "cls_score", "map"],
                            "properties": {
                                "id": {"type": "integer"},
                                "box": _BOX,
                                "cls_score": _UNIT,
                                "iou_score": _UNIT,
                                "parsing_score": _UNIT,
                                "map": {"type": "string"},
                            },
                        },
                    },
                },
            },
        },
    },
}


@dataclass(frozen=True)
class InstanceEntry:
    id: int
    box: Tuple[float, float, float, float]
    map: str
    cls_score: float = 1.0
    iou_score: Optional[float] = None
    parsing_score: Optional[float] = None


@dataclass(frozen=True)
class ImageEntry:
    id: str
    width: int
    height: int
    gt_semantic: str
    gt_instances: Tuple[InstanceEntry, ...] = ()
    predictions: Tuple[InstanceEntry, ...] = ()
    pred_semantic: Optional[str] = None

    def paths(self) -> List[str]:
        out = [self.gt_semantic] + ([self.pred_semantic] if self.pred_semantic else [])
        return out + [e.map for e in self.gt_instances + self.predictions]


@dataclass(frozen=True)
class DatasetManifest:
    categories: CategorySet
    images: Tuple[ImageEntry, ...]
    base_dir: Optional[str] = field(default=None, compare=False)

    def resolve(self, rel: str) -> Path:
        return Path(self.base_dir or ".") / rel


def _json_path(err) -> str:
    path = "$"
    for p in err.absolute_path:
        path += f"[{p}]" if isinstance(p, int) else f".{p}"
    return path


def _entry(d: dict, default_id: int, is_pred: bool) -> InstanceEntry:
    return InstanceEntry(
        id=int(d.get("id", default_id)),
        box=tuple(float(v) for v in d["box"]),
        map=d["map"],
        cls_score=float(d["cls_score"]) if is_pred else 1.0,
        iou_score=None if d.get("iou_score") is None else float(d["iou_score"]),
        parsing_score=None if d.get("parsing_score") is None else float(d["parsing_score"]),
    )


def read_manifest(text: str, base_dir=None, check_files: bool = True) -> DatasetManifest:
    """Parse and validate a manifest document.

    Schema violations are reported with their JSON path. When ``base_dir`` is
    given and ``check_files`` is set, every referenced file must exist.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"manifest is not valid JSON: {e}") from None
    errors = sorted(jsonschema.Draft7Validator(MANIFEST_SCHEMA).iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        raise ValidationError([f"{_json_path(e)}: {e.message}" for e in errors])
    cat = doc["categories"]
    try:
        categories = CategorySet(cat["count"], cat.get("names"))
    except ValidationError as e:
        raise ValidationError([f"$.categories.{p}" for p in e.problems]) from None
    images = []
    seen = set()
    problems = []
    for k, im in enumerate(doc["images"]):
        if im["id"] in seen:
            problems.append(f"$.images[{k}].id: duplicate image id {im['id']!r}")
        seen.add(im["id"])
        images.append(
            ImageEntry(
                id=im["id"],
                width=im["width"],
                height=im["height"],
                gt_semantic=im["gt_semantic"],
                pred_semantic=im.get("pred_semantic"),
                gt_instances=tuple(_entry(d, i, False) for i, d in enumerate(im.get("gt_instances", []))),
                predictions=tuple(_entry(d, i, True) for i, d in enumerate(im.get("predictions", []))),
            )
        )
    if problems:
        raise ValidationError(problems)
    manifest = DatasetManifest(categories, tuple(images), None if base_dir is None else str(base_dir))
    if base_dir is not None and check_files:
        missing = [p for im in images for p in im.paths() if not manifest.resolve(p).is_file()]
        if missing:
            raise ValidationError([f"missing file: {manifest.resolve(p)}" for p in missing])
    return manifest


def read_manifest_file(path) -> DatasetManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ValidationError(f"cannot read manifest {path}: {e.strerror}") from None
    return read_manifest(text, base_dir=path.parent)


def _score(x):
    return None if x is None else round(float(x), 6)


def _entry_doc(e: InstanceEntry, is_pred: bool) -> dict:
    d = {"id": e.id, "box": list(e.box)}
    if is_pred:
        d["cls_score"] = _score(e.cls_score)
        if e.iou_score is not None:
            d["iou_score"] = _score(e.iou_score)
        if e.parsing_score is not None:
            d["parsing_score"] = _score(e.parsing_score)
    d["map"] = e.map
    return d


def write_manifest(m: DatasetManifest) -> str:
    doc = {
        "categories": {"count": m.categories.count, **({"names": list(m.categories.names)} if m.categories.names else {})},
        "images": [],
    }
    for im in m.images:
        d = {"id": im.id, "width": im.width, "height": im.height, "gt_semantic": im.gt_semantic}
        if im.pred_semantic is not None:
            d["pred_semantic"] = im.pred_semantic
        d["gt_instances"] = [_entry_doc(e, False) for e in im.gt_instances]
        d["predictions"] = [_entry_doc(e, True) for e in im.predictions]
        doc["images"].append(d)
    return json.dumps(doc, indent=1) + "\n"


_HALF_ULP6 = 5e-7  # largest error of a score written with 6 decimals


def _fused_consistent(cls: float, iou: float, parsing: float) -> bool:
    """Whether ``parsing`` can be the rounded fusion of the unrounded cls/iou scores."""
    lo = fuse_scores(max(cls - _HALF_ULP6, 0.0), max(iou - _HALF_ULP6, 0.0))
    hi = fuse_scores(min(cls + _HALF_ULP6, 1.0), min(iou + _HALF_ULP6, 1.0))
    return lo - _HALF_ULP6 - 1e-12 <= parsing <= hi + _HALF_ULP6 + 1e-12


class Dataset(SequenceABC):
    """Sequence of :class:`ImageRecord` loaded lazily, one image per access."""

    def __init__(self, manifest: DatasetManifest, cache_size: int = 8):
        self.manifest = manifest
        self.categories = manifest.categories
        self._load = lru_cache(maxsize=cache_size)(self._load_uncached)

    def __len__(self):
        return len(self.manifest.images)

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self[i] for i in range(*k.indices(len(self)))]
        if k < 0:
            k += len(self)
        if not 0 <= k < len(self):
            raise IndexError(k)
        return self._load(k)

    def _instance(self, e: InstanceEntry, is_pred: bool, width: int, height: int) -> Instance:
        parsing = e.parsing_score
        if parsing is not None and e.iou_score is not None:
            if not _fused_consistent(e.cls_score, e.iou_score, parsing):
                raise ValidationError(
                    f"{e.map}: parsing_score {parsing} != sqrt(cls_score * iou_score)"
                    f" = {fuse_scores(e.cls_score, e.iou_score):.6f}"
                )
            parsing = fuse_scores(e.cls_score, e.iou_score)
        return Instance(
            id=e.id,
            box=Box(*e.box).clip(width, height),
            cls_score=e.cls_score,
            local_map=load_label_map(self.manifest.resolve(e.map), self.categories),
            iou_score=e.iou_score,
            parsing_score=parsing,
        )

    def _load_uncached(self, k: int) -> ImageRecord:
        im = self.manifest.images[k]
        cats = self.categories
        return ImageRecord(
            image_id=im.id,
            width=im.width,
            height=im.height,
            categories=cats,
            gt_semantic=load_label_map(self.manifest.resolve(im.gt_semantic), cats),
            pred_semantic=None if im.pred_semantic is None else load_label_map(self.manifest.resolve(im.pred_semantic), cats),
            gt_instances=tuple(self._instance(e, False, im.width, im.height) for e in im.gt_instances),
            pred_instances=tuple(self._instance(e, True, im.width, im.height) for e in im.predictions),
        )


def load_dataset(manifest: DatasetManifest) -> Dataset:
    return Dataset(manifest)


def _safe_name(image_id: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in image_id)


def write_dataset(records: Sequence[ImageRecord], out_dir, categories: Optional[CategorySet] = None) -> Path:
    """Write records as PNGs plus ``manifest.json`` under ``out_dir``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if categories is None:
        if not records:
            raise InvalidInputError("no records and no category set given")
        categories = records[0].categories
    images = []
    for rec in records:
        sub = _safe_name(rec.image_id)
        (out_dir / sub).mkdir(exist_ok=True)

        def put(name, m, sub=sub):
            save_label_map(out_dir / sub / name, m)
            return f"{sub}/{name}"

        def entry(inst, prefix):
            return InstanceEntry(
                id=inst.id,
                box=inst.box.as_tuple(),
                map=put(f"{prefix}_{inst.id}.png", inst.local_map),
                cls_score=inst.cls_score,
                iou_score=inst.iou_score,
                parsing_score=inst.parsing_score,
            )

        images.append(
            ImageEntry(
                id=rec.image_id,
                width=rec.width,
                height=rec.height,
                gt_semantic=put("gt.png", rec.gt_semantic),
                pred_semantic=None if rec.pred_semantic is None else put("global.png", rec.pred_semantic),
                gt_instances=tuple(entry(g, "gt") for g in rec.gt_instances),
                predictions=tuple(entry(p, "pred") for p in rec.pred_instances),
            )
        )
    path = out_dir / "manifest.json"
    path.write_text(write_manifest(DatasetManifest(categories, tuple(images))), encoding="utf-8")
    return path


# --- reports ---------------------------------------------------------------

@dataclass(frozen=True)
class EvalResult:
    name: str
    num_images: int
    semantic: Optional[SemanticMetrics] = None
    instance: Optional[InstanceMetrics] = None


def _r4(x):
    return None if x is None else round(float(x), 4)


def _threshold_key(t: float) -> str:
    return f"{t:.1f}" if round(t, 1) == t else repr(t)


def _result_doc(r: EvalResult) -> dict:
    d = {"name": r.name, "num_images": r.num_images}
    if r.semantic is not None:
        s = r.semantic
        d["semantic"] = {
            "miou": _r4(s.miou),
            "pixel_acc": _r4(s.pixel_acc),
            "mean_acc": _r4(s.mean_acc),
            "per_class_iou": [_r4(v) for v in s.per_class_iou],
        }
    if r.instance is not None:
        m = r.instance
        d["instance"] = {
            "ap": {_threshold_key(t): _r4(v) for t, v in sorted(m.ap_at.items())},
            "ap_vol": _r4(m.ap_vol),
            "pcp50": _r4(m.pcp50),
        }
    return d


def write_report(results: Union[EvalResult, Sequence[EvalResult]], extra: Optional[dict] = None) -> str:
    """Deterministic JSON report. Fractions are reported in [0, 1], rounded to 4 decimals."""
    single = isinstance(results, EvalResult)
    rows = [results] if single else list(results)
    if not rows or any(r.num_images == 0 for r in rows):
        raise InvalidInputError("no images")
    if single:
        doc = {"protocol": PROTOCOL_VERSION, **_result_doc(rows[0])}
    else:
        doc = {"protocol": PROTOCOL_VERSION, "rows": [_result_doc(r) for r in rows]}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def table_columns(r: EvalResult):
    """Paper-style percent columns available for one result row."""
    cols = {}
    if r.semantic is not None:
        cols["mIoU"] = r.semantic.miou
    if r.instance is not None:
        cols["AP^p_50"] = r.instance.ap_at.get(0.5)
        cols["AP^p_vol"] = r.instance.ap_vol
        cols["PCP_50"] = r.instance.pcp50
    if r.semantic is not None and r.instance is None:
        cols["Pixel acc."] = r.semantic.pixel_acc
        cols["Mean acc."] = r.semantic.mean_acc
    return cols


def format_table(results: Union[EvalResult, Sequence[EvalResult]], deltas: Optional[dict] = None) -> str:
    """Aligned plain-text table in percent with one decimal, fixed column order.

    ``deltas`` maps row name -> {column: delta fraction}; shown as ``(+x.x)``.
    """
    rows = [results] if isinstance(results, EvalResult) else list(results)
    if not rows or any(r.num_images == 0 for r in rows):
        raise InvalidInputError("no images")
    order = ["mIoU", "AP^p_50", "AP^p_vol", "PCP_50", "Pixel acc.", "Mean acc."]
    per_row = [table_columns(r) for r in rows]
    cols = [c for c in order if any(c in pr for pr in per_row)]
    cells = [["Method"] + cols]
    for r, pr in zip(rows, per_row):
        line = [r.name]
        for c in cols:
            v = pr.get(c)
            text = "-" if v is None else f"{100 * v:.1f}"
            d = (deltas or {}).get(r.name, {}).get(c)
            if d is not None and v is not None:
                text += f" ({100 * d:+.1f})"
            line.append(text)
        cells.append(line)
    widths = [max(len(row[i]) for row in cells) for i in range(len(cells[0]))]
    out = []
    for k, row in enumerate(cells):
        out.append("  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(row, widths))).rstrip())
        if k == 0:
            out.append("-" * len(out[0]))
    return "\n".join(out) + "\n"


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    os.replace(tmp, path)
