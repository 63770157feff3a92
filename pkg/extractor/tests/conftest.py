"""Shared fixtures: real image folders materialized from sklearn digits."""

from __future__ import annotations

import numpy as np
import pytest
from PIL import Image
from sklearn.datasets import load_digits

TRAIN_PER_CLASS = 15
TEST_PER_CLASS = 5


@pytest.fixture(scope="session")
def digits_folder(tmp_path_factory):
    """10-class handwritten-digit image folder: train/ and test/ splits,
    one subdirectory per class, PNG files, deterministic contents."""
    root = tmp_path_factory.mktemp("digits")
    data = load_digits()
    seen = {c: 0 for c in range(10)}
    for image, label in zip(data.images, data.target):
        n = seen[label]
        if n < TRAIN_PER_CLASS:
            split = "train"
        elif n < TRAIN_PER_CLASS + TEST_PER_CLASS:
            split = "test"
        else:
            seen[label] += 1
            continue
        class_dir = root / split / f"{label:02d}"
        class_dir.mkdir(parents=True, exist_ok=True)
        array = (image / 16.0 * 255.0).astype(np.uint8)
        Image.fromarray(array, mode="L").save(class_dir / f"{n:03d}.png")
        seen[label] += 1
    return root


@pytest.fixture(scope="session")
def tiny_folder(tmp_path_factory):
    """Two classes, three images, one exact duplicate pair."""
    root = tmp_path_factory.mktemp("tiny")
    rng = np.random.default_rng(1)
    (root / "a").mkdir()
    (root / "b").mkdir()
    first = rng.integers(0, 255, size=(32, 32, 3)).astype(np.uint8)
    Image.fromarray(first).save(root / "a" / "one.png")
    Image.fromarray(first).save(root / "a" / "two.png")
    other = rng.integers(0, 255, size=(32, 32, 3)).astype(np.uint8)
    Image.fromarray(other).save(root / "b" / "other.png")
    return root
