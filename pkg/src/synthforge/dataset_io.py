"""Dataset export/import and instance-size statistics.

Export follows the COCO JSON layout: one annotation file with images,
annotations and categories, plus a manifest with provenance (seed, config
hash). Area is the visible pixel count, not w*h, and iscrowd is always 0.
A passthrough command re-binds an annotation file to a directory of
translated images with identical file names, so style-translated copies of
a synthetic dataset keep their boxes without re-annotation.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .asset_store import AIRCRAFT_CATEGORIES

CATEGORY_IDS = {name: i + 1 for i, name in enumerate(AIRCRAFT_CATEGORIES)}
CATEGORY_NAMES = {i: n for n, i in CATEGORY_IDS.items()}


class SchemaError(ValueError):
    """Input file violates the documented schema; message carries the
    field path."""


@dataclass(frozen=True)
class ImageInfo:
    id: int
    file_name: str
    width: int
    height: int


@dataclass(frozen=True)
class GtBox:
    id: int
    image_id: int
    category_id: int
    bbox: tuple[float, float, float, float]
    area: float
    iscrowd: int


@dataclass(frozen=True)
class CategoryInfo:
    id: int
    name: str


@dataclass(frozen=True)
class GroundTruthSet:
    images: tuple[ImageInfo, ...]
    annotations: tuple[GtBox, ...]
    categories: tuple[CategoryInfo, ...]


@dataclass(frozen=True)
class Detection:
    image_id: int
    category_id: int
    bbox: tuple[float, float, float, float]
    score: float


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    categories: dict[int, str]
    images: tuple[ImageInfo, ...]
    annotation_count: int
    config_hash: str
    seed: int


def image_file_name(index: int) -> str:
    return f"img_{index:06d}.png"


def write_dataset(images, annotations, out_dir, *, dataset_name="synthforge",
                  config_hash="", seed=0) -> DatasetManifest:
    """Write images and their annotations as a COCO-format dataset.

    images: sequence of (scene index, rgb uint8 array); indices must be
    0..n-1, each exported as img_{index:06d}.png with image id index+1.
    All validation happens before the first byte is written. The annotation
    file is assembled in index order, so output is byte-identical for
    identical inputs no matter how rendering was parallelized.
    """
    out_dir = Path(out_dir)
    images = sorted(images, key=lambda item: item[0])
    indices = [idx for idx, _ in images]
    if len(set(indices)) != len(indices):
        raise ValueError("duplicate image indices")
    if indices != list(range(len(indices))):
        raise ValueError("image indices must be contiguous from 0")
    ids = {idx + 1 for idx in indices}
    for ann in annotations:
        if ann.image_id not in ids:
            raise ValueError(f"annotation references missing image id {ann.image_id}")
        if ann.category not in CATEGORY_IDS:
            raise ValueError(f"unknown category {ann.category!r}")

    out_dir.mkdir(parents=True, exist_ok=True)
    image_infos = []
    for idx, rgb in images:
        name = image_file_name(idx)
        Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(
            out_dir / name, format="PNG")
        image_infos.append(ImageInfo(id=idx + 1, file_name=name,
                                     width=rgb.shape[1], height=rgb.shape[0]))

    ordered = sorted(annotations, key=lambda a: (a.image_id, a.instance_id))
    coco = {
        "images": [
            {"id": im.id, "file_name": im.file_name,
             "width": im.width, "height": im.height}
            for im in image_infos
        ],
        "annotations": [
            {"id": n + 1, "image_id": a.image_id,
             "category_id": CATEGORY_IDS[a.category],
             "bbox": list(a.bbox), "area": a.area, "iscrowd": 0,
             "visibility": a.visibility}
            for n, a in enumerate(ordered)
        ],
        "categories": [
            {"id": i, "name": n} for i, n in sorted(CATEGORY_NAMES.items())
        ],
    }
    (out_dir / "annotations.json").write_text(
        json.dumps(coco, indent=2, sort_keys=True) + "\n")

    manifest = DatasetManifest(
        name=dataset_name, categories=dict(CATEGORY_NAMES),
        images=tuple(image_infos), annotation_count=len(ordered),
        config_hash=config_hash, seed=seed)
    (out_dir / "manifest.json").write_text(json.dumps({
        "dataset": manifest.name,
        "categories": {str(i): n for i, n in sorted(CATEGORY_NAMES.items())},
        "images": coco["images"],
        "annotation_count": manifest.annotation_count,
        "config_hash": manifest.config_hash,
        "seed": manifest.seed,
    }, indent=2, sort_keys=True) + "\n")
    return manifest


def _require(record, key, path, types):
    if key not in record:
        raise SchemaError(f"{path}.{key}: missing")
    value = record[key]
    if not isinstance(value, types) or isinstance(value, bool):
        raise SchemaError(f"{path}.{key}: wrong type {type(value).__name__}")
    return value


def _parse_bbox(raw, path):
    if (not isinstance(raw, list) or len(raw) != 4
            or any(isinstance(v, bool) or not isinstance(v, (int, float))
                   for v in raw)):
        raise SchemaError(f"{path}: expected 4 numbers")
    if raw[2] <= 0 or raw[3] <= 0:
        raise SchemaError(f"{path}: width and height must be positive")
    return tuple(float(v) for v in raw)


def read_ground_truth(path) -> GroundTruthSet:
    """Parse and validate a COCO-format ground-truth file."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise SchemaError("top level: expected an object")
    for key in ("images", "annotations", "categories"):
        if key not in raw or not isinstance(raw[key], list):
            raise SchemaError(f"{key}: missing or not a list")

    images = []
    seen_ids = set()
    for i, rec in enumerate(raw["images"]):
        path_i = f"images[{i}]"
        img = ImageInfo(
            id=_require(rec, "id", path_i, int),
            file_name=_require(rec, "file_name", path_i, str),
            width=_require(rec, "width", path_i, int),
            height=_require(rec, "height", path_i, int))
        if img.id in seen_ids:
            raise SchemaError(f"{path_i}.id: duplicate image id {img.id}")
        seen_ids.add(img.id)
        images.append(img)

    categories = []
    for i, rec in enumerate(raw["categories"]):
        path_i = f"categories[{i}]"
        categories.append(CategoryInfo(
            id=_require(rec, "id", path_i, int),
            name=_require(rec, "name", path_i, str)))
    cat_ids = {c.id for c in categories}

    annotations = []
    for i, rec in enumerate(raw["annotations"]):
        path_i = f"annotations[{i}]"
        box = GtBox(
            id=_require(rec, "id", path_i, int),
            image_id=_require(rec, "image_id", path_i, int),
            category_id=_require(rec, "category_id", path_i, int),
            bbox=_parse_bbox(_require(rec, "bbox", path_i, list), f"{path_i}.bbox"),
            area=float(_require(rec, "area", path_i, (int, float))),
            iscrowd=int(rec.get("iscrowd", 0)))
        if box.image_id not in seen_ids:
            raise SchemaError(f"{path_i}.image_id: unknown image id {box.image_id}")
        if box.category_id not in cat_ids:
            raise SchemaError(f"{path_i}.category_id: unknown category id "
                              f"{box.category_id}")
        annotations.append(box)
    return GroundTruthSet(tuple(images), tuple(annotations), tuple(categories))


def read_detections(path) -> list[Detection]:
    """Parse and validate a detections file (JSON array of records)."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from None
    if not isinstance(raw, list):
        raise SchemaError("top level: expected an array")
    detections = []
    for i, rec in enumerate(raw):
        path_i = f"detections[{i}]"
        if not isinstance(rec, dict):
            raise SchemaError(f"{path_i}: expected an object")
        score = float(_require(rec, "score", path_i, (int, float)))
        if not 0.0 <= score <= 1.0:
            raise SchemaError(f"{path_i}.score: {score} outside [0,1]")
        detections.append(Detection(
            image_id=_require(rec, "image_id", path_i, int),
            category_id=_require(rec, "category_id", path_i, int),
            bbox=_parse_bbox(_require(rec, "bbox", path_i, list), f"{path_i}.bbox"),
            score=score))
    return detections


@dataclass(frozen=True)
class SizeStats:
    """Instance sizes ((h+w)/2 px) with a 20-bin equal-width histogram."""

    sizes: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray
    min: float
    max: float
    mean: float

    @property
    def count(self) -> int:
        return len(self.sizes)

    def to_csv(self) -> str:
        rows = ["bin_low,bin_high,count"]
        for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
            rows.append(f"{float(lo)!r},{float(hi)!r},{int(c)}")
        rows.append(f"# summary,count={self.count},min={self.min!r},"
                    f"max={self.max!r},mean={self.mean!r}")
        return "\n".join(rows) + "\n"


def compute_instance_size_stats(annotations, bins: int = 20) -> SizeStats:
    """Sizes are (h+w)/2 per box. Bins are equal-width over the observed
    [min, max] (expanded by half a pixel per side when all sizes are equal);
    the last bin is closed on the right.

    Raises ValueError on an empty annotation list.
    """
    boxes = [a.bbox for a in annotations]
    if not boxes:
        raise ValueError("no annotations to summarize")
    sizes = np.array([(b[2] + b[3]) / 2.0 for b in boxes], dtype=np.float64)
    lo = float(sizes.min())
    hi = float(sizes.max())
    if lo == hi:
        edges = np.linspace(lo - 0.5, hi + 0.5, bins + 1)
    else:
        edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(sizes, bins=edges)
    return SizeStats(sizes=sizes, bin_edges=edges, counts=counts,
                     min=lo, max=hi, mean=float(sizes.mean()))


def inherit_annotations(annotation_file, translated_dir) -> Path:
    """Bind an annotation file to a directory of translated images.

    Every image named in the file must exist in translated_dir; the
    annotation content is copied verbatim to translated_dir/annotations.json.
    Raises SchemaError when the annotation set is empty or images are
    missing (listing their names).
    """
    annotation_file = Path(annotation_file)
    translated_dir = Path(translated_dir)
    gt = read_ground_truth(annotation_file)
    if not gt.annotations:
        raise SchemaError("annotation file has no annotations to inherit")
    missing = [im.file_name for im in gt.images
               if not (translated_dir / im.file_name).is_file()]
    if missing:
        raise SchemaError("missing translated images: " + ", ".join(missing))
    target = translated_dir / "annotations.json"
    if target.resolve() != annotation_file.resolve():
        shutil.copyfile(annotation_file, target)
    return target
