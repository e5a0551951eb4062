"""Sharpening and geometric augmentations, with box-transform policies.

Geometric operations return a :class:`TransformRecord` describing exactly
what was done, so annotation files can be replayed through the same
transform.  Everything here is deterministic; random parameter choices are
the pipeline's job.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .imagecore import to_float, to_u8

Box = tuple[float, float, float, float]

# Boxes keeping less than this fraction of their area after a crop are dropped.
MIN_VISIBLE_FRACTION = 0.25


@dataclass(frozen=True)
class TransformRecord:
    """Parameters of one geometric transform, tied to the pre-transform size."""

    kind: str  # "hflip" | "broken_mirror" | "crop" | "none"
    image_width: int
    image_height: int
    split_col: int | None = None
    rect: tuple[int, int, int, int] | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "image_width": self.image_width,
            "image_height": self.image_height,
            "split_col": self.split_col,
            "rect": list(self.rect) if self.rect is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransformRecord":
        rect = d.get("rect")
        return cls(
            kind=d["kind"],
            image_width=d["image_width"],
            image_height=d["image_height"],
            split_col=d.get("split_col"),
            rect=tuple(rect) if rect is not None else None,
        )


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian with kernel radius ceil(3*sigma)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(xs**2) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with clamp-to-edge (replicate) borders."""
    x = to_float(img)
    k = gaussian_kernel(sigma)
    out = convolve1d(x, k, axis=0, mode="nearest")
    return convolve1d(out, k, axis=1, mode="nearest")


def sharpen(img: np.ndarray, sigma: float = 1.0, amount: float = 1.5) -> np.ndarray:
    """Unsharp mask: I + amount * (I - blur(I)), clamped to the valid range.

    amount=0 is the identity and constant images are fixed points.  uint8
    input yields uint8 output.
    """
    if amount < 0:
        raise ValueError(f"amount must be >= 0, got {amount}")
    was_u8 = img.dtype == np.uint8
    x = to_float(img)
    out = np.clip(x + amount * (x - gaussian_blur(x, sigma)), 0.0, 1.0)
    return to_u8(out) if was_u8 else out


def hflip(img: np.ndarray) -> tuple[np.ndarray, TransformRecord]:
    """Mirror the image left-right (column j -> width-1-j)."""
    rec = TransformRecord(
        kind="hflip", image_width=img.shape[1], image_height=img.shape[0]
    )
    return img[:, ::-1].copy(), rec


def broken_mirror(img: np.ndarray, split_col: int) -> tuple[np.ndarray, TransformRecord]:
    """Split at a column and flip each side vertically.

    Rows are reversed independently within columns [0, split_col) and
    [split_col, width).  Applying the same split twice restores the image.
    """
    height, width = img.shape[:2]
    if not 0 <= split_col <= width:
        raise ValueError(f"split_col {split_col} out of range [0, {width}]")
    out = img.copy()
    out[:, :split_col] = img[::-1, :split_col]
    out[:, split_col:] = img[::-1, split_col:]
    rec = TransformRecord(
        kind="broken_mirror", image_width=width, image_height=height, split_col=split_col
    )
    return out, rec


def crop(img: np.ndarray, rect: tuple[int, int, int, int]) -> tuple[np.ndarray, TransformRecord]:
    """Copy the sub-image at rect (x, y, w, h)."""
    height, width = img.shape[:2]
    x, y, w, h = rect
    if w < 1 or h < 1 or x < 0 or y < 0 or x + w > width or y + h > height:
        raise ValueError(f"crop rect {rect} out of bounds for {width}x{height} image")
    rec = TransformRecord(
        kind="crop", image_width=width, image_height=height, rect=(x, y, w, h)
    )
    return img[y : y + h, x : x + w].copy(), rec


def hflip_box(box: Box, image_width: float) -> Box:
    """Mirror a (x, y, w, h) box across the vertical center line."""
    x, y, w, h = box
    if w <= 0 or h <= 0 or x < 0 or x + w > image_width:
        raise ValueError(f"box {box} out of bounds for width {image_width}")
    return (image_width - x - w, y, w, h)


def vflip_box(box: Box, image_height: float) -> Box:
    """Mirror a (x, y, w, h) box across the horizontal center line."""
    x, y, w, h = box
    if w <= 0 or h <= 0 or y < 0 or y + h > image_height:
        raise ValueError(f"box {box} out of bounds for height {image_height}")
    return (x, image_height - y - h, w, h)


def broken_mirror_box(
    box: Box, split_col: int, image_width: float, image_height: float
) -> Box | None:
    """Box policy for :func:`broken_mirror`.

    A box entirely on one side of the split is flipped vertically; a box
    straddling the split is dropped (None), since half-mirrored content
    would no longer match its label.
    """
    x, y, w, h = box
    if x < 0 or x + w > image_width:
        raise ValueError(f"box {box} exceeds image width {image_width}")
    if x + w <= split_col or x >= split_col:
        return vflip_box(box, image_height)
    return None


def crop_box(box: Box, rect: tuple[int, int, int, int]) -> Box | None:
    """Box policy for :func:`crop`: clip to the rect, drop tiny remnants.

    The box is intersected with the crop rect and translated into the crop's
    frame.  Boxes keeping less than MIN_VISIBLE_FRACTION of their original
    area are dropped (None).
    """
    bx, by, bw, bh = box
    rx, ry, rw, rh = rect
    x0 = max(bx, rx)
    y0 = max(by, ry)
    x1 = min(bx + bw, rx + rw)
    y1 = min(by + bh, ry + rh)
    if x1 <= x0 or y1 <= y0:
        return None
    if (x1 - x0) * (y1 - y0) < MIN_VISIBLE_FRACTION * bw * bh:
        return None
    return (x0 - rx, y0 - ry, x1 - x0, y1 - y0)


def transform_box(box: Box, rec: TransformRecord) -> Box | None:
    """Replay a TransformRecord on one box; None means the box is dropped."""
    if rec.kind == "none":
        return box
    if rec.kind == "hflip":
        return hflip_box(box, rec.image_width)
    if rec.kind == "broken_mirror":
        if rec.split_col is None:
            raise ValueError("broken_mirror record lacks split_col")
        return broken_mirror_box(box, rec.split_col, rec.image_width, rec.image_height)
    if rec.kind == "crop":
        if rec.rect is None:
            raise ValueError("crop record lacks rect")
        return crop_box(box, rec.rect)
    raise ValueError(f"unknown transform kind {rec.kind!r}")
