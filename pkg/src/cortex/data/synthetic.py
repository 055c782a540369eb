"""Seeded synthetic four-class image set: filled disk, ring, cross, gradient."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import DEFAULT_LABEL_MAP, Dataset, class_names

PATTERNS = ("disk", "ring", "cross", "gradient")


def pattern(name: str, size: int) -> np.ndarray:
    """Noise-free ``size x size`` pattern with values in [0, 1]."""
    c = (np.arange(size) + 0.5) / size - 0.5
    yy, xx = np.meshgrid(c, c, indexing="ij")
    r = np.hypot(yy, xx)
    if name == "disk":
        return (r <= 0.3).astype(np.float64)
    if name == "ring":
        return ((r >= 0.22) & (r <= 0.34)).astype(np.float64)
    if name == "cross":
        return ((np.abs(yy) <= 0.06) | (np.abs(xx) <= 0.06)).astype(np.float64)
    if name == "gradient":
        return np.broadcast_to(xx + 0.5, (size, size)).copy()
    raise ValueError(f"unknown pattern {name!r}")


def make_synthetic(n_per_class: int = 50, size: int = 200, noise: float = 0.05, seed: int = 0) -> Dataset:
    """Class ``i`` is ``PATTERNS[i]`` plus i.i.d. Gaussian noise, clipped to [0, 1].

    Examples are ordered by class, matching what directory ingestion produces.
    """
    rng = np.random.default_rng(seed)
    names = class_names(DEFAULT_LABEL_MAP)
    images = np.empty((4 * n_per_class, 3, size, size), dtype=np.float32)
    labels = np.repeat(np.arange(4, dtype=np.uint8), n_per_class)
    sources = []
    for cls, pat in enumerate(PATTERNS):
        base = pattern(pat, size)
        for j in range(n_per_class):
            k = cls * n_per_class + j
            img = base[None] + rng.normal(0.0, noise, size=(3, size, size))
            images[k] = np.clip(img, 0.0, 1.0)
            sources.append(f"{names[cls]}/{pat}_{j:04d}")
    return Dataset(images, labels, dict(DEFAULT_LABEL_MAP), sources)


def write_image_tree(dataset: Dataset, root) -> list[Path]:
    """Write ``dataset`` as 8-bit PNGs under ``root/<class>/``."""
    root = Path(root)
    names = dataset.class_names
    written = []
    for img, label, sid in zip(dataset.images, dataset.labels, dataset.source_ids):
        folder = root / names[label]
        folder.mkdir(parents=True, exist_ok=True)
        grid = np.clip(np.floor(img.transpose(1, 2, 0) * 255.0 + 0.5), 0, 255).astype(np.uint8)
        path = folder / (Path(sid).name + ".png")
        Image.fromarray(grid, "RGB").save(path)
        written.append(path)
    for name in names:
        (root / name).mkdir(parents=True, exist_ok=True)
    return written
