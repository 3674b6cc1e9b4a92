"""Shared fixtures: procedural painting-like images and tiny corpora on disk."""

from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from artextend.corpus import denormalize, resize_bilinear


def painting(seed: int, size: int = 64) -> np.ndarray:
    """Procedural stand-in for an artwork: smooth field plus soft blobs.

    Smooth enough that bilinear round trips stay close, varied enough that
    feature statistics have full-rank covariance.
    """
    r = np.random.default_rng(seed)
    img = resize_bilinear(r.uniform(-0.8, 0.8, (4, 4, 3)).astype(np.float32), size, size)
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(3):
        cy, cx = r.uniform(0, size, 2)
        rad = r.uniform(size / 8, size / 4)
        colour = r.uniform(-1, 1, 3)
        m = np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * rad**2)))[..., None]
        img = img * (1 - 0.8 * m) + colour * 0.8 * m
    img += r.normal(0, 0.02, img.shape)
    return np.clip(img, -1, 1).astype(np.float32)


def save_painting(path, seed: int, size: int = 64, width: int | None = None) -> np.ndarray:
    """Write a painting to disk as PNG; returns the saved uint8 array."""
    img = painting(seed, size)
    if width is not None and width != size:
        img = resize_bilinear(img, size, width)
    arr = denormalize(img)
    Image.fromarray(arr, mode="RGB").save(path)
    return arr


@pytest.fixture(scope="session")
def desk_paintings() -> list[np.ndarray]:
    return [painting(i) for i in range(8)]


@pytest.fixture()
def corpus_dir(tmp_path):
    """Five usable images (mixed sizes >= 64) plus one that is too small."""
    root = tmp_path / "corpus"
    root.mkdir()
    for i, (h, w) in enumerate([(64, 64), (96, 96), (80, 120), (100, 70), (64, 65)]):
        save_painting(root / f"img_{i}.png", seed=10 + i, size=h, width=w)
    save_painting(root / "tiny.png", seed=99, size=32)
    return root
