"""sRGB <-> CIELab conversion (D65 white point, 2-degree observer).

The forward chain is sRGB -> linear RGB (IEC 61966-2-1 piecewise transfer
function) -> XYZ -> CIELab with the standard piecewise cube root.  The white
point is taken as the row sums of the RGB->XYZ matrix so that pure white maps
to exactly (L=100, a=0, b=0).  All math runs in float64.
"""

from __future__ import annotations

import numpy as np

from .imagecore import to_float, to_u8

# sRGB D65 linear RGB -> XYZ (2-degree observer).
RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
XYZ_TO_RGB = np.linalg.inv(RGB_TO_XYZ)
WHITE_XYZ = RGB_TO_XYZ.sum(axis=1)

# CIE constants for the piecewise f(t) cube root.
_EPSILON = 216.0 / 24389.0
_KAPPA = 24389.0 / 27.0

_SRGB_LINEAR_THRESHOLD = 0.04045
_LINEAR_SRGB_THRESHOLD = 0.0031308


def srgb_to_linear(x: np.ndarray) -> np.ndarray:
    """Invert the sRGB transfer function on values in [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(
        x > _SRGB_LINEAR_THRESHOLD, ((x + 0.055) / 1.055) ** 2.4, x / 12.92
    )


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    """Apply the sRGB transfer function to linear values in [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(
        x > _LINEAR_SRGB_THRESHOLD, 1.055 * x ** (1.0 / 2.4) - 0.055, x * 12.92
    )


def _f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _EPSILON, np.cbrt(t), (_KAPPA * t + 16.0) / 116.0)


def _f_inv(ft: np.ndarray) -> np.ndarray:
    cube = ft**3
    return np.where(cube > _EPSILON, cube, (116.0 * ft - 16.0) / _KAPPA)


def rgb_to_lab(img: np.ndarray) -> np.ndarray:
    """Convert an RGB image to CIELab.

    Accepts uint8 storage or float working-space values in [0, 1]; any
    (..., 3) shape works.  Returns a float64 array of the same shape with
    channels (L, a, b): L in [0, 100], a and b nominally in [-128, 127].
    """
    rgb = to_float(np.asarray(img))
    xyz = srgb_to_linear(rgb) @ RGB_TO_XYZ.T
    # Per-plane slices keep the piecewise math on contiguous buffers, which
    # is noticeably faster than elementwise work on the interleaved layout.
    fx = _f(xyz[..., 0] / WHITE_XYZ[0])
    fy = _f(xyz[..., 1] / WHITE_XYZ[1])
    fz = _f(xyz[..., 2] / WHITE_XYZ[2])
    return np.stack(
        (116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)), axis=-1
    )


def lab_to_rgb(lab: np.ndarray, *, as_float: bool = False) -> np.ndarray:
    """Convert a CIELab image back to RGB.

    Out-of-gamut values are clamped per channel in linear RGB before the
    transfer function, so any Lab input yields a valid image.  Returns uint8
    storage by default, or float64 in [0, 1] when ``as_float`` is set.
    """
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    x = _f_inv(fy + lab[..., 1] / 500.0) * WHITE_XYZ[0]
    y = _f_inv(fy) * WHITE_XYZ[1]
    z = _f_inv(fy - lab[..., 2] / 200.0) * WHITE_XYZ[2]
    planes = []
    for row in XYZ_TO_RGB:
        lin = row[0] * x + row[1] * y + row[2] * z
        np.clip(lin, 0.0, 1.0, out=lin)
        planes.append(linear_to_srgb(lin))
    rgb = np.stack(planes, axis=-1)
    return rgb if as_float else to_u8(rgb)
