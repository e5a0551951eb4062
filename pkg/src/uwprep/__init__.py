"""Preprocessing toolkit for underwater imagery.

Contrast and color enhancement, gray-world channel stabilization,
annotation-aware geometric augmentation, detection metrics, and a
deterministic batch pipeline.
"""

from .annotations import AnnotationError, AnnotationSet, apply_transform, load_coco, save_coco
from .augment import (
    MIN_VISIBLE_FRACTION,
    TransformRecord,
    broken_mirror,
    crop,
    gaussian_blur,
    hflip,
    sharpen,
    transform_box,
)
from .colorspace import lab_to_rgb, rgb_to_lab
from .detmetrics import (
    DetectionSet,
    EvalSummary,
    EvaluationError,
    evaluate,
    image_stats,
    iou,
    load_detections,
)
from .iem import IemConfig, enhance
from .imagecore import ImageIOError, load_image, save_image, to_float, to_u8
from .pipeline import Manifest, PipelineConfig, PipelineError, run
from .stabilize import EPSILON_MEAN, StabilizationReport, channel_means, stabilize

__version__ = "0.1.0"

__all__ = [
    "AnnotationError",
    "AnnotationSet",
    "DetectionSet",
    "EPSILON_MEAN",
    "EvalSummary",
    "EvaluationError",
    "IemConfig",
    "ImageIOError",
    "Manifest",
    "MIN_VISIBLE_FRACTION",
    "PipelineConfig",
    "PipelineError",
    "StabilizationReport",
    "TransformRecord",
    "apply_transform",
    "broken_mirror",
    "channel_means",
    "crop",
    "enhance",
    "evaluate",
    "gaussian_blur",
    "hflip",
    "image_stats",
    "iou",
    "lab_to_rgb",
    "load_coco",
    "load_detections",
    "load_image",
    "rgb_to_lab",
    "run",
    "save_coco",
    "save_image",
    "sharpen",
    "stabilize",
    "to_float",
    "to_u8",
    "transform_box",
    "__version__",
]
