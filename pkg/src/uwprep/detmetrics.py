"""COCO-style detection scoring: AP over IoU 0.50:0.05:0.95 plus size splits.

Conventions follow the common COCO evaluation protocol: greedy score-ordered
matching, 101-point interpolated average precision, at most 100 detections
per image and class, and small/medium/large splits at 32^2 and 96^2 pixels.
Classes without ground truth are skipped in the means rather than scored 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annotations import AnnotationSet
from .imagecore import to_float
from .stabilize import ChannelStats, channel_means

Box = tuple[float, float, float, float]

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_SAMPLES = tuple(i / 100.0 for i in range(101))
MAX_DETECTIONS = 100

AREA_RANGES: dict[str, tuple[float, float]] = {
    "all": (0.0, math.inf),
    "small": (0.0, 32.0**2),
    "medium": (32.0**2, 96.0**2),
    "large": (96.0**2, math.inf),
}


class EvaluationError(Exception):
    """Raised for malformed prediction files or unresolved ids."""


@dataclass
class DetectionSet:
    """Scored predictions in the detection-results interchange format."""

    predictions: list[dict]

    @classmethod
    def from_list(cls, items: list) -> "DetectionSet":
        preds = []
        for i, item in enumerate(items):
            try:
                bbox = [float(v) for v in item["bbox"]]
                score = float(item["score"])
                pred = {
                    "image_id": item["image_id"],
                    "category_id": item["category_id"],
                    "bbox": bbox,
                    "score": score,
                }
            except (KeyError, TypeError, ValueError) as exc:
                raise EvaluationError(f"prediction #{i} is malformed: {item!r}") from exc
            if len(bbox) != 4 or bbox[2] <= 0 or bbox[3] <= 0:
                raise EvaluationError(f"prediction #{i} has degenerate bbox {bbox}")
            if not math.isfinite(score):
                raise EvaluationError(f"prediction #{i} has non-finite score {score}")
            preds.append(pred)
        return cls(predictions=preds)


def load_detections(path: str | Path) -> DetectionSet:
    """Load a predictions file: a JSON list of image_id/category_id/bbox/score."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise EvaluationError(f"{path}: cannot parse predictions: {exc}") from exc
    if not isinstance(data, list):
        raise EvaluationError(f"{path}: expected a JSON list of predictions")
    return DetectionSet.from_list(data)


@dataclass
class EvalSummary:
    """The reporting columns: AP, AP50, AP75, APS, APM, APL, per-class AP.

    Values are fractions in [0, 1]; None marks undefined entries (no ground
    truth in that slice).  Tables multiply by 100.
    """

    ap: float | None
    ap50: float | None
    ap75: float | None
    ap_small: float | None
    ap_medium: float | None
    ap_large: float | None
    per_class: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ap": self.ap,
            "ap50": self.ap50,
            "ap75": self.ap75,
            "ap_small": self.ap_small,
            "ap_medium": self.ap_medium,
            "ap_large": self.ap_large,
            "per_class": {str(k): v for k, v in self.per_class.items()},
        }


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two (x, y, w, h) boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise ValueError(f"boxes must have positive extent: {a}, {b}")
    ix = min(ax + aw, bx + bw) - max(ax, bx)
    iy = min(ay + ah, by + bh) - max(ay, by)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (aw * ah + bw * bh - inter)


def match_predictions(
    gt: list[Box], preds: list[tuple[Box, float]], iou_thr: float
) -> list[tuple[int, int | None]]:
    """Greedily match scored predictions of one image+class to ground truth.

    Predictions are taken in descending score order (ties keep insertion
    order) and each one is matched to the still-unmatched ground-truth box
    of highest IoU, provided that IoU reaches ``iou_thr``.  At most
    MAX_DETECTIONS predictions are considered; the rest are discarded.

    Returns (prediction index, matched gt index or None) pairs in the order
    predictions were processed.
    """
    order = sorted(range(len(preds)), key=lambda i: -preds[i][1])[:MAX_DETECTIONS]
    taken = [False] * len(gt)
    result: list[tuple[int, int | None]] = []
    for pi in order:
        box = preds[pi][0]
        best_j, best_iou = None, 0.0
        for j, gbox in enumerate(gt):
            if taken[j]:
                continue
            v = iou(box, gbox)
            if v >= iou_thr and v > best_iou:
                best_j, best_iou = j, v
        if best_j is not None:
            taken[best_j] = True
        result.append((pi, best_j))
    return result


def average_precision(tp_flags, num_gt: int) -> float | None:
    """101-point interpolated AP from a score-ordered TP/FP sequence.

    ``tp_flags`` is an iterable of booleans (True = TP) ordered by descending
    score.  The precision envelope (running max from the right) is sampled at
    recalls 0.00, 0.01, ..., 1.00 and averaged.  Returns None when there is
    no ground truth, so callers can skip the class.
    """
    if num_gt < 0:
        raise ValueError(f"num_gt must be >= 0, got {num_gt}")
    if num_gt == 0:
        return None
    flags = np.asarray(list(tp_flags), dtype=bool)
    if flags.size == 0:
        return 0.0
    tp_cum = np.cumsum(flags)
    n_pred = np.arange(1, flags.size + 1)
    recall = tp_cum / num_gt
    precision = tp_cum / n_pred
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_SAMPLES, side="left")
    sampled = [float(envelope[i]) if i < flags.size else 0.0 for i in idx]
    return sum(sampled) / len(RECALL_SAMPLES)


def _area_of(ann: dict) -> float:
    if "area" in ann and ann["area"] is not None:
        return float(ann["area"])
    return float(ann["bbox"][2] * ann["bbox"][3])


def _class_range_flags(
    gts: list[dict],
    preds: list[dict],
    iou_thr: float,
    area_range: tuple[float, float],
) -> tuple[list[tuple[float, bool]], int]:
    """Score/TP pairs and eligible-GT count for one image+class+threshold.

    Ground truth outside the area range (or marked iscrowd) is ignore-only:
    it contributes nothing to the GT count, and predictions overlapping it
    are dropped from scoring instead of counted as false positives.
    Unmatched predictions whose own area falls outside the range are dropped
    the same way.
    """
    lo, hi = area_range
    crowd = [g for g in gts if g.get("iscrowd", 0)]
    normal = [g for g in gts if not g.get("iscrowd", 0)]
    eligible = [g for g in normal if lo <= _area_of(g) < hi]
    area_ignored = [g for g in normal if not lo <= _area_of(g) < hi]

    scored = [(tuple(p["bbox"]), p["score"]) for p in preds]
    matches = match_predictions([tuple(g["bbox"]) for g in eligible], scored, iou_thr)

    ignored_taken = [False] * len(area_ignored)
    out: list[tuple[float, bool]] = []
    for pi, gj in matches:
        box, score = scored[pi]
        if gj is not None:
            out.append((score, True))
            continue
        best_j, best_iou = None, 0.0
        for j, g in enumerate(area_ignored):
            if ignored_taken[j]:
                continue
            v = iou(box, tuple(g["bbox"]))
            if v >= iou_thr and v > best_iou:
                best_j, best_iou = j, v
        if best_j is not None:
            ignored_taken[best_j] = True
            continue
        if any(iou(box, tuple(g["bbox"])) >= iou_thr for g in crowd):
            continue
        if not lo <= box[2] * box[3] < hi:
            continue
        out.append((score, False))
    return out, len(eligible)


def _mean_defined(values: list[float | None]) -> float | None:
    defined = [v for v in values if v is not None]
    if not defined:
        return None
    return sum(defined) / len(defined)


def evaluate(gt: AnnotationSet, detections: DetectionSet | list[dict]) -> EvalSummary:
    """Score predictions against ground truth over the full grid.

    AP is computed per class and IoU threshold across the whole dataset,
    then averaged over classes with at least one ground-truth box.  The
    size-split columns repeat this with the area-range rules described in
    :func:`_class_range_flags`.  ``detections`` may be a plain list of
    result dicts; it is validated the same way either way.
    """
    if not isinstance(detections, DetectionSet):
        detections = DetectionSet.from_list(detections)
    image_ids = sorted(im["id"] for im in gt.images)
    valid_images = set(image_ids)
    valid_categories = {c["id"] for c in gt.categories}
    for p in detections.predictions:
        if p["image_id"] not in valid_images:
            raise EvaluationError(f"prediction references unknown image {p['image_id']}")
        if p["category_id"] not in valid_categories:
            raise EvaluationError(
                f"prediction references unknown category {p['category_id']}"
            )

    gt_by_key: dict[tuple, list[dict]] = {}
    for ann in gt.annotations:
        gt_by_key.setdefault((ann["image_id"], ann["category_id"]), []).append(ann)
    preds_by_key: dict[tuple, list[dict]] = {}
    for p in detections.predictions:
        preds_by_key.setdefault((p["image_id"], p["category_id"]), []).append(p)

    class_ids = sorted(valid_categories)
    # ap_grid[range_name][class_id][threshold_index] -> AP or None
    ap_grid: dict[str, dict] = {name: {} for name in AREA_RANGES}
    for range_name, area_range in AREA_RANGES.items():
        for cid in class_ids:
            per_thr: list[float | None] = []
            for thr in IOU_THRESHOLDS:
                pairs: list[tuple[float, bool]] = []
                num_gt = 0
                for img_id in image_ids:
                    img_gts = gt_by_key.get((img_id, cid), [])
                    img_preds = preds_by_key.get((img_id, cid), [])
                    if not img_gts and not img_preds:
                        continue
                    flags, n = _class_range_flags(img_gts, img_preds, thr, area_range)
                    pairs.extend(flags)
                    num_gt += n
                order = sorted(range(len(pairs)), key=lambda i: -pairs[i][0])
                per_thr.append(
                    average_precision([pairs[i][1] for i in order], num_gt)
                )
            ap_grid[range_name][cid] = per_thr

    def range_mean(range_name: str) -> float | None:
        return _mean_defined([_mean_defined(ap_grid[range_name][c]) for c in class_ids])

    def threshold_mean(thr: float) -> float | None:
        ti = IOU_THRESHOLDS.index(thr)
        return _mean_defined([ap_grid["all"][c][ti] for c in class_ids])

    return EvalSummary(
        ap=range_mean("all"),
        ap50=threshold_mean(0.5),
        ap75=threshold_mean(0.75),
        ap_small=range_mean("small"),
        ap_medium=range_mean("medium"),
        ap_large=range_mean("large"),
        per_class={c: _mean_defined(ap_grid["all"][c]) for c in class_ids},
    )


@dataclass(frozen=True)
class ImageStats:
    """Channel means of an image plus their dispersion (population std)."""

    stats: ChannelStats
    dispersion: float


def image_stats(img: np.ndarray) -> ImageStats:
    """Channel means and how far apart they sit; 0 dispersion = gray-balanced."""
    stats = channel_means(to_float(img))
    g = stats.grand_mean
    var = sum((m - g) ** 2 for m in stats.means) / 3.0
    return ImageStats(stats=stats, dispersion=math.sqrt(var))


def format_eval_table(summary: EvalSummary, names: dict | None = None) -> str:
    """Aligned plain-text table in the usual reporting column order."""

    def cell(v: float | None) -> str:
        return "-" if v is None else f"{100.0 * v:.2f}"

    headers = ["AP", "AP50", "AP75", "APS", "APM", "APL"]
    values = [
        cell(summary.ap),
        cell(summary.ap50),
        cell(summary.ap75),
        cell(summary.ap_small),
        cell(summary.ap_medium),
        cell(summary.ap_large),
    ]
    width = max(len(s) for s in headers + values) + 2
    lines = [
        "".join(h.rjust(width) for h in headers),
        "".join(v.rjust(width) for v in values),
    ]
    if summary.per_class:
        names = names or {}
        label_width = max(
            [len(str(names.get(c, c))) for c in summary.per_class] + [len("class")]
        )
        lines.append("")
        lines.append(f"{'class'.ljust(label_width)}  AP")
        for cid in sorted(summary.per_class):
            label = str(names.get(cid, cid))
            lines.append(f"{label.ljust(label_width)}  {cell(summary.per_class[cid])}")
    return "\n".join(lines)
