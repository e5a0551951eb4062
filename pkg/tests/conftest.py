from __future__ import annotations

import numpy as np
import pytest

from uwprep import save_image


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_coco():
    """A small, valid annotation dict shared by several suites."""
    return {
        "images": [
            {"id": 1, "file_name": "a.png", "width": 100, "height": 80},
            {"id": 2, "file_name": "b.png", "width": 64, "height": 64},
        ],
        "categories": [{"id": 1, "name": "fish"}, {"id": 2, "name": "rov"}],
        "annotations": [
            {"id": 1, "image_id": 1, "category_id": 1, "bbox": [10, 10, 20, 16],
             "area": 320.0, "iscrowd": 0},
            {"id": 2, "image_id": 1, "category_id": 2, "bbox": [40, 30, 30, 30],
             "area": 900.0, "iscrowd": 0},
            {"id": 3, "image_id": 2, "category_id": 1, "bbox": [5, 5, 10, 10],
             "area": 100.0, "iscrowd": 0},
        ],
    }


@pytest.fixture
def image_dir(tmp_path, rng):
    """Directory of eight small random PNGs; returns (dir, list of names)."""
    d = tmp_path / "imgs"
    d.mkdir()
    names = []
    for i in range(8):
        img = rng.integers(0, 220, size=(24, 32, 3), dtype=np.uint8)
        name = f"frame{i:02d}.png"
        save_image(img, d / name)
        names.append(name)
    return d, names
