"""COCO-style annotation ingestion, validation, emission, and box replay.

Annotation sets are kept in the familiar COCO dict shape (images,
categories, annotations) with referential integrity enforced on load.
Geometric transforms recorded by the augment module can be replayed onto the
boxes of a single image, applying the same keep/drop policies used for
pixels.
"""

from __future__ import annotations

import copy
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .augment import TransformRecord, transform_box


class AnnotationError(Exception):
    """Raised for malformed annotation files or broken references."""


@dataclass
class AnnotationSet:
    """Validated COCO-style ground truth.

    ``clamped_boxes`` counts boxes pulled back inside image bounds during
    validation; ``dropped_boxes`` counts boxes removed by a transform replay.
    Both are bookkeeping and excluded from equality.
    """

    images: list[dict]
    categories: list[dict]
    annotations: list[dict]
    extra: dict = field(default_factory=dict)
    clamped_boxes: int = field(default=0, compare=False)
    dropped_boxes: int = field(default=0, compare=False)

    @classmethod
    def from_dict(cls, data: dict) -> "AnnotationSet":
        """Validate a parsed COCO dict; clamps out-of-bounds boxes."""
        try:
            images = [dict(d) for d in data.get("images", [])]
            categories = [dict(d) for d in data.get("categories", [])]
            annotations = [copy.deepcopy(d) for d in data.get("annotations", [])]
        except TypeError as exc:
            raise AnnotationError(f"malformed annotation structure: {exc}") from exc
        extra = {
            k: copy.deepcopy(v)
            for k, v in data.items()
            if k not in ("images", "categories", "annotations")
        }

        image_by_id: dict = {}
        for im in images:
            _require_keys(im, ("id", "file_name", "width", "height"), "image")
            if im["id"] in image_by_id:
                raise AnnotationError(f"duplicate image id {im['id']}")
            if im["width"] < 1 or im["height"] < 1:
                raise AnnotationError(f"image {im['id']} has non-positive dimensions")
            image_by_id[im["id"]] = im
        category_ids = set()
        for cat in categories:
            _require_keys(cat, ("id", "name"), "category")
            if cat["id"] in category_ids:
                raise AnnotationError(f"duplicate category id {cat['id']}")
            category_ids.add(cat["id"])

        clamped = 0
        seen_ann_ids = set()
        for ann in annotations:
            _require_keys(ann, ("id", "image_id", "category_id", "bbox"), "annotation")
            if ann["id"] in seen_ann_ids:
                raise AnnotationError(f"duplicate annotation id {ann['id']}")
            seen_ann_ids.add(ann["id"])
            if ann["image_id"] not in image_by_id:
                raise AnnotationError(
                    f"annotation {ann['id']} references missing image {ann['image_id']}"
                )
            if ann["category_id"] not in category_ids:
                raise AnnotationError(
                    f"annotation {ann['id']} references missing category {ann['category_id']}"
                )
            im = image_by_id[ann["image_id"]]
            clamped += _clamp_bbox(ann, im["width"], im["height"])
            ann.setdefault("area", float(ann["bbox"][2] * ann["bbox"][3]))
            ann.setdefault("iscrowd", 0)
        return cls(
            images=images,
            categories=categories,
            annotations=annotations,
            extra=extra,
            clamped_boxes=clamped,
        )

    def to_dict(self) -> dict:
        return {
            **copy.deepcopy(self.extra),
            "images": [dict(d) for d in self.images],
            "categories": [dict(d) for d in self.categories],
            "annotations": [copy.deepcopy(d) for d in self.annotations],
        }

    def image_by_id(self, image_id) -> dict:
        for im in self.images:
            if im["id"] == image_id:
                return im
        raise AnnotationError(f"no image with id {image_id}")

    def annotations_for(self, image_id) -> list[dict]:
        return [a for a in self.annotations if a["image_id"] == image_id]


def _require_keys(d: dict, keys: tuple[str, ...], what: str) -> None:
    for k in keys:
        if k not in d:
            raise AnnotationError(f"{what} entry missing required key {k!r}: {d}")


def _clamp_bbox(ann: dict, width: float, height: float) -> int:
    """Clamp an annotation bbox into image bounds in place; 1 if changed."""
    x, y, w, h = (float(v) for v in ann["bbox"])
    if w <= 0 or h <= 0:
        raise AnnotationError(f"annotation {ann['id']} has degenerate bbox {ann['bbox']}")
    x0, y0 = max(x, 0.0), max(y, 0.0)
    x1, y1 = min(x + w, float(width)), min(y + h, float(height))
    if x1 <= x0 or y1 <= y0:
        raise AnnotationError(
            f"annotation {ann['id']} bbox {ann['bbox']} lies outside its image"
        )
    new = [x0, y0, x1 - x0, y1 - y0]
    if new != [x, y, w, h]:
        ann["bbox"] = new
        return 1
    ann["bbox"] = [x, y, w, h]
    return 0


def load_coco(path: str | Path) -> AnnotationSet:
    """Load and validate a COCO-format JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise AnnotationError(f"{path}: cannot parse annotation file: {exc}") from exc
    if not isinstance(data, dict):
        raise AnnotationError(f"{path}: expected a JSON object at top level")
    return AnnotationSet.from_dict(data)


def save_coco(ann_set: AnnotationSet, path: str | Path) -> None:
    """Write an AnnotationSet as COCO JSON; load_coco(save_coco(s)) == s."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(ann_set.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def apply_transform(
    ann_set: AnnotationSet, image_id, rec: TransformRecord
) -> AnnotationSet:
    """Replay a geometric transform onto the boxes of one image.

    Boxes are mapped by the augment module's policies (straddling and
    undersized boxes are dropped); for crops the stored image dimensions are
    updated.  Segmentation payloads cannot be transformed and are removed
    from affected annotations with a warning.  Returns a new set; the count
    of dropped boxes is recorded on it.
    """
    im = ann_set.image_by_id(image_id)
    if rec.kind != "none" and (
        rec.image_width != im["width"] or rec.image_height != im["height"]
    ):
        raise AnnotationError(
            f"transform recorded for {rec.image_width}x{rec.image_height} but image "
            f"{image_id} is {im['width']}x{im['height']}"
        )

    images = [dict(d) for d in ann_set.images]
    if rec.kind == "crop":
        assert rec.rect is not None
        for entry in images:
            if entry["id"] == image_id:
                entry["width"], entry["height"] = rec.rect[2], rec.rect[3]

    dropped = 0
    stripped_masks = 0
    annotations: list[dict] = []
    for ann in ann_set.annotations:
        if ann["image_id"] != image_id:
            annotations.append(copy.deepcopy(ann))
            continue
        new_box = transform_box(tuple(ann["bbox"]), rec)
        if new_box is None:
            dropped += 1
            continue
        new_ann = copy.deepcopy(ann)
        new_ann["bbox"] = list(new_box)
        if rec.kind != "none" and "segmentation" in new_ann:
            del new_ann["segmentation"]
            stripped_masks += 1
        if rec.kind == "crop":
            new_ann["area"] = float(new_box[2] * new_box[3])
        annotations.append(new_ann)
    if stripped_masks:
        warnings.warn(
            f"dropped segmentation payload of {stripped_masks} annotation(s); "
            "mask geometry is not transformed",
            stacklevel=2,
        )
    return AnnotationSet(
        images=images,
        categories=[dict(d) for d in ann_set.categories],
        annotations=annotations,
        extra=copy.deepcopy(ann_set.extra),
        clamped_boxes=ann_set.clamped_boxes,
        dropped_boxes=dropped,
    )
