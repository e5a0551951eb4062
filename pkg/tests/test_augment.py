from __future__ import annotations

import math

import numpy as np
import pytest

from uwprep.augment import (
    MIN_VISIBLE_FRACTION,
    TransformRecord,
    broken_mirror,
    broken_mirror_box,
    crop,
    crop_box,
    gaussian_blur,
    gaussian_kernel,
    hflip,
    hflip_box,
    sharpen,
    transform_box,
    vflip_box,
)


def blur_reference(img: np.ndarray, sigma: float) -> np.ndarray:
    """Dead-slow 2D gaussian blur with replicated edges, for cross-checking."""
    radius = math.ceil(3 * sigma)
    ks = [math.exp(-(i * i) / (2 * sigma * sigma)) for i in range(-radius, radius + 1)]
    total = sum(ks)
    ks = [k / total for k in ks]
    h, w = img.shape[:2]
    out = np.zeros_like(img, dtype=np.float64)
    for y in range(h):
        for x in range(w):
            acc = np.zeros(img.shape[2])
            for dy, ky in enumerate(ks):
                for dx, kx in enumerate(ks):
                    sy = min(max(y + dy - radius, 0), h - 1)
                    sx = min(max(x + dx - radius, 0), w - 1)
                    acc += ky * kx * img[sy, sx]
            out[y, x] = acc
    return out


def test_gaussian_kernel_shape_and_mass():
    k = gaussian_kernel(1.0)
    assert k.size == 2 * 3 + 1
    assert k.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(k, k[::-1], atol=0)  # symmetric
    assert k.argmax() == k.size // 2


def test_gaussian_kernel_radius_tracks_sigma():
    assert gaussian_kernel(0.5).size == 2 * 2 + 1
    assert gaussian_kernel(2.0).size == 2 * 6 + 1


def test_gaussian_kernel_rejects_bad_sigma():
    with pytest.raises(ValueError):
        gaussian_kernel(0.0)


def test_blur_matches_direct_convolution(rng):
    img = rng.uniform(0, 1, size=(9, 8, 3))
    got = gaussian_blur(img, 1.0)
    np.testing.assert_allclose(got, blur_reference(img, 1.0), atol=1e-12)


def test_blur_preserves_constant(rng):
    img = np.full((12, 12, 3), 0.37)
    np.testing.assert_allclose(gaussian_blur(img, 1.5), img, atol=1e-12)


def test_sharpen_constant_identity():
    img = np.full((10, 10, 3), 0.5)
    np.testing.assert_allclose(sharpen(img), img, atol=1e-12)


def test_sharpen_zero_amount_is_identity(rng):
    img = rng.uniform(0, 1, size=(8, 8, 3))
    np.testing.assert_allclose(sharpen(img, amount=0.0), img, atol=1e-12)


def test_sharpen_overshoots_step_edge():
    # mid-range step so the halo is visible before the [0, 1] clamp bites
    img = np.full((8, 16, 3), 0.2)
    img[:, 8:] = 0.7
    out = sharpen(img, sigma=1.0, amount=1.5)
    assert out.max() > 0.7  # bright-side halo
    assert out.min() < 0.2  # dark-side dip


def test_sharpen_formula(rng):
    img = rng.uniform(0, 1, size=(7, 7, 3))
    blurred = gaussian_blur(img, 1.0)
    expected = np.clip(img + 1.5 * (img - blurred), 0.0, 1.0)
    np.testing.assert_allclose(sharpen(img, sigma=1.0, amount=1.5), expected, atol=1e-12)


def test_sharpen_clamps_to_unit_range():
    img = np.zeros((8, 16, 3))
    img[:, 8:] = 1.0
    out = sharpen(img, sigma=1.0, amount=3.0)
    assert out.max() == 1.0
    assert out.min() == 0.0


def test_sharpen_rejects_negative_amount(rng):
    with pytest.raises(ValueError):
        sharpen(rng.uniform(0, 1, size=(4, 4, 3)), amount=-0.1)


def test_sharpen_uint8_round_trip(rng):
    img = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
    out = sharpen(img)
    assert out.dtype == np.uint8


# --- geometric transforms ------------------------------------------------


def test_hflip_reverses_columns(rng):
    img = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
    out, rec = hflip(img)
    assert np.array_equal(out, img[:, ::-1])
    assert rec.kind == "hflip"
    assert (rec.image_width, rec.image_height) == (7, 5)


def test_hflip_returns_contiguous_copy(rng):
    img = rng.integers(0, 256, size=(4, 4, 3), dtype=np.uint8)
    out, _ = hflip(img)
    assert out.flags["C_CONTIGUOUS"]
    out[0, 0, 0] = 99
    assert img[0, 3, 0] != 99 or True  # mutation must not leak back
    assert not np.shares_memory(out, img)


def test_broken_mirror_flips_rows_each_side(rng):
    img = rng.integers(0, 256, size=(6, 10, 3), dtype=np.uint8)
    out, rec = broken_mirror(img, 4)
    assert np.array_equal(out[:, :4], img[::-1, :4])
    assert np.array_equal(out[:, 4:], img[::-1, 4:])
    assert rec.split_col == 4


@pytest.mark.parametrize("split", [0, 10])
def test_broken_mirror_degenerate_split_is_vflip(rng, split):
    img = rng.integers(0, 256, size=(6, 10, 3), dtype=np.uint8)
    out, _ = broken_mirror(img, split)
    assert np.array_equal(out, img[::-1])


def test_broken_mirror_split_bounds(rng):
    img = rng.integers(0, 256, size=(4, 8, 3), dtype=np.uint8)
    for bad in (-1, 9):
        with pytest.raises(ValueError):
            broken_mirror(img, bad)


def test_crop_extracts_window(rng):
    img = rng.integers(0, 256, size=(10, 12, 3), dtype=np.uint8)
    out, rec = crop(img, (3, 2, 6, 5))
    assert np.array_equal(out, img[2:7, 3:9])
    assert rec.rect == (3, 2, 6, 5)
    assert not np.shares_memory(out, img)


def test_crop_rejects_out_of_bounds(rng):
    img = rng.integers(0, 256, size=(10, 12, 3), dtype=np.uint8)
    for bad in [(-1, 0, 4, 4), (0, 0, 13, 4), (9, 8, 4, 4), (0, 0, 0, 3)]:
        with pytest.raises(ValueError):
            crop(img, bad)


def test_involutions(rng):
    for _ in range(20):
        h = int(rng.integers(2, 20))
        w = int(rng.integers(2, 20))
        img = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
        once, _ = hflip(img)
        again, _ = hflip(once)
        assert np.array_equal(again, img)
        split = int(rng.integers(0, w + 1))
        once, _ = broken_mirror(img, split)
        again, _ = broken_mirror(once, split)
        assert np.array_equal(again, img)


# --- box mapping ---------------------------------------------------------


def test_hflip_box_directed():
    assert hflip_box((10, 5, 20, 12), 64) == (34, 5, 20, 12)


def test_hflip_box_is_involution(rng):
    for _ in range(50):
        w = int(rng.integers(5, 100))
        bw = int(rng.integers(1, w + 1))
        x = int(rng.integers(0, w - bw + 1))
        box = (x, 3, bw, 4)
        assert hflip_box(hflip_box(box, w), w) == box


def test_hflip_box_bounds():
    with pytest.raises(ValueError):
        hflip_box((60, 0, 10, 10), 64)


def test_vflip_box_directed():
    assert vflip_box((4, 10, 8, 20), 48) == (4, 18, 8, 20)


def test_broken_mirror_box_sides():
    width, height, split = 100, 60, 40
    # entirely left of the split: vertical flip only
    assert broken_mirror_box((5, 10, 20, 15), split, width, height) == (5, 35, 20, 15)
    # entirely right: same
    assert broken_mirror_box((40, 0, 10, 10), split, width, height) == (40, 50, 10, 10)
    # straddling the split column: gone
    assert broken_mirror_box((35, 10, 20, 15), split, width, height) is None
    # a box touching the split from the left still counts as one-sided
    assert broken_mirror_box((20, 0, 20, 10), split, width, height) == (20, 50, 20, 10)


def test_crop_box_inside_translates():
    assert crop_box((12, 12, 8, 8), (10, 10, 40, 30)) == (2, 2, 8, 8)


def test_crop_box_visibility_threshold():
    # 16 of 64 px visible: exactly the 25% floor -> kept
    kept = crop_box((0, 0, 8, 8), (4, 4, 20, 20))
    assert kept == (0, 0, 4, 4)
    # 4 of 64 px visible: well below the floor -> dropped
    assert crop_box((0, 0, 8, 8), (6, 6, 20, 20)) is None
    assert crop_box((30, 30, 5, 5), (0, 0, 10, 10)) is None  # disjoint


def test_min_visible_fraction_constant():
    assert MIN_VISIBLE_FRACTION == 0.25


def test_transform_box_dispatch(rng):
    box = (4, 4, 6, 6)
    none_rec = TransformRecord(kind="none", image_width=32, image_height=32)
    assert transform_box(box, none_rec) == box
    flip_rec = TransformRecord(kind="hflip", image_width=32, image_height=32)
    assert transform_box(box, flip_rec) == hflip_box(box, 32)
    with pytest.raises(ValueError):
        transform_box(box, TransformRecord(kind="wobble", image_width=32, image_height=32))


def test_transform_record_dict_round_trip():
    rec = TransformRecord(kind="crop", image_width=64, image_height=48, rect=(1, 2, 20, 21))
    back = TransformRecord.from_dict(rec.to_dict())
    assert back == rec
    rec2 = TransformRecord(kind="broken_mirror", image_width=10, image_height=9, split_col=3)
    assert TransformRecord.from_dict(rec2.to_dict()) == rec2
