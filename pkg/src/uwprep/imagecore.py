"""Image buffers, codec I/O, and 8-bit <-> float working-space conversion.

Images are numpy arrays of shape (H, W, 3) in R,G,B order.  Storage form is
uint8; the working form is float64 in [0, 1].  All enhancement math runs on
the float form and quantizes once when results are written back to storage.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError


class ImageIOError(Exception):
    """Raised when an image file cannot be decoded or written."""


_LOADABLE_MODES = {"1", "L", "LA", "P", "PA", "RGB", "RGBA"}


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check that ``img`` is a (H, W, 3) uint8 or float array; return it."""
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) array, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"image dimensions must be >= 1, got {img.shape[:2]}")
    if img.dtype != np.uint8 and not np.issubdtype(img.dtype, np.floating):
        raise ValueError(f"expected uint8 or float dtype, got {img.dtype}")
    return img


def load_image(path: str | Path) -> np.ndarray:
    """Decode a PNG or JPEG file to a (H, W, 3) uint8 RGB array.

    Grayscale inputs are replicated across R,G,B; alpha channels are
    dropped.  Raises ImageIOError for unreadable files, images with more
    than 8 bits per sample, and zero-dimension images.
    """
    path = Path(path)
    try:
        with PILImage.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise ImageIOError(f"{path}: unsupported format {im.format!r}")
            if im.mode not in _LOADABLE_MODES:
                # 16-bit ("I;16", "I") and float ("F") rasters land here.
                raise ImageIOError(
                    f"{path}: unsupported mode {im.mode!r} (more than 8 bits per sample?)"
                )
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except ImageIOError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageIOError(f"{path}: cannot decode image: {exc}") from exc
    if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ImageIOError(f"{path}: zero-dimension image")
    return arr


def save_image(img: np.ndarray, path: str | Path) -> None:
    """Encode ``img`` as PNG at ``path``.

    Float inputs are quantized with :func:`to_u8` first.  The output is
    always PNG regardless of the file extension, so a save/load round trip
    is pixel-exact.
    """
    validate_image(img)
    if img.dtype != np.uint8:
        img = to_u8(img)
    try:
        PILImage.fromarray(img, mode="RGB").save(Path(path), format="PNG")
    except OSError as exc:
        raise ImageIOError(f"{path}: cannot write image: {exc}") from exc


def to_float(img: np.ndarray) -> np.ndarray:
    """8-bit storage -> float working space; divides by 255 exactly."""
    if np.issubdtype(img.dtype, np.floating):
        return np.asarray(img, dtype=np.float64)
    return img.astype(np.float64) / 255.0


def to_u8(img: np.ndarray) -> np.ndarray:
    """Float working space -> 8-bit storage.

    Multiplies by 255, rounds half away from zero, and clamps to [0, 255].
    """
    if img.dtype == np.uint8:
        return img
    scaled = np.asarray(img, dtype=np.float64) * 255.0
    rounded = np.trunc(scaled + np.copysign(0.5, scaled))
    return np.clip(rounded, 0.0, 255.0).astype(np.uint8)
