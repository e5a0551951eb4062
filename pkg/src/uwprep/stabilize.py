"""Channel stabilization: gray-world rescaling of RGB channels.

Each channel is multiplied by grand_mean / channel_mean, which equalizes the
three channel means and strips the single-color (typically blue) cast of
underwater imagery.  An optional re-stretch pass then min-max normalizes each
channel to the full range.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .imagecore import to_float, to_u8

# Means below this (in [0, 1] working space, i.e. one 8-bit step) would make
# the scale factor blow up; such channels pass through with scale 1.
EPSILON_MEAN = 1.0 / 255.0

_CHANNEL_NAMES = ("r", "g", "b")


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel arithmetic means and their grand mean, in [0, 1]."""

    mean_r: float
    mean_g: float
    mean_b: float
    grand_mean: float

    @property
    def means(self) -> tuple[float, float, float]:
        return (self.mean_r, self.mean_g, self.mean_b)


@dataclass(frozen=True)
class StabilizationReport:
    """What the stabilizer did to one image."""

    stats: ChannelStats
    scale_r: float
    scale_g: float
    scale_b: float
    blue_dominant: bool
    restretch_applied: bool
    clipped_fraction: float
    low_mean_channels: tuple[str, ...] = ()

    @property
    def scales(self) -> tuple[float, float, float]:
        return (self.scale_r, self.scale_g, self.scale_b)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["low_mean_channels"] = list(self.low_mean_channels)
        return d


def channel_means(img: np.ndarray) -> ChannelStats:
    """Arithmetic mean of each channel plane in float working space."""
    x = to_float(img)
    means = x.reshape(-1, 3).mean(axis=0)
    return ChannelStats(
        mean_r=float(means[0]),
        mean_g=float(means[1]),
        mean_b=float(means[2]),
        grand_mean=float((means[0] + means[1] + means[2]) / 3.0),
    )


def is_blue_dominant(stats: ChannelStats) -> bool:
    """True iff mean_b >= mean_g >= mean_r (non-strict)."""
    return stats.mean_b >= stats.mean_g >= stats.mean_r


def scale_factors(stats: ChannelStats) -> tuple[float, float, float]:
    """Per-channel scale factors grand_mean / channel_mean.

    Channels with mean below EPSILON_MEAN get scale 1 instead of a huge or
    undefined ratio; :func:`stabilize` flags them in its report.
    """
    return tuple(
        1.0 if m < EPSILON_MEAN else stats.grand_mean / m for m in stats.means
    )


def stabilize(
    img: np.ndarray, restretch: bool = True
) -> tuple[np.ndarray, StabilizationReport]:
    """Rescale each channel by its stabilization factor.

    The channel planes are multiplied by grand_mean / channel_mean in float
    space.  With ``restretch`` on, each channel is then min-max normalized to
    [0, 1] (skipped for constant channels); finally values are clamped to
    [0, 1].  uint8 input yields uint8 output quantized once at the end.

    Returns the stabilized image and a report carrying the input statistics,
    the scale factors, and the fraction of samples that fell outside [0, 1]
    after scaling (measured before the re-stretch).
    """
    was_u8 = img.dtype == np.uint8
    x = to_float(img)
    stats = channel_means(x)
    scales = scale_factors(stats)
    y = x * np.asarray(scales)
    clipped = float(np.count_nonzero(y > 1.0) / y.size)
    if restretch:
        for c in range(3):
            plane = y[..., c]
            span = float(plane.max() - plane.min())
            if span > 0.0:
                y[..., c] = (plane - plane.min()) / span
    y = np.clip(y, 0.0, 1.0)
    report = StabilizationReport(
        stats=stats,
        scale_r=scales[0],
        scale_g=scales[1],
        scale_b=scales[2],
        blue_dominant=is_blue_dominant(stats),
        restretch_applied=restretch,
        clipped_fraction=clipped,
        low_mean_channels=tuple(
            name for name, m in zip(_CHANNEL_NAMES, stats.means) if m < EPSILON_MEAN
        ),
    )
    return (to_u8(y) if was_u8 else y), report
