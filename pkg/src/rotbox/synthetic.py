"""Seeded synthetic boxes and scenes for benchmarks and property checks."""

from __future__ import annotations

import math

import numpy as np

from .obb import canonicalize_array


def random_boxes(n: int, seed: int = 0, extent: float = 1024.0, min_side: float = 8.0,
                 max_side: float = 256.0) -> np.ndarray:
    """``n`` uniformly placed boxes with random sides and angles, ``(n, 5)``."""
    rng = np.random.default_rng(seed)
    boxes = np.column_stack([
        rng.uniform(0, extent, n),
        rng.uniform(0, extent, n),
        rng.uniform(min_side, max_side, n),
        rng.uniform(min_side, max_side, n),
        rng.uniform(-math.pi, math.pi, n),
    ])
    return canonicalize_array(boxes)


def thin_box_scene(seed: int, image_size: int = 512, aspect: float = 5.0, min_count: int = 3,
                   max_count: int = 8, min_long: float = 48.0, max_long: float = 320.0) -> np.ndarray:
    """Elongated ground truths (long:short = ``aspect``) at uniform angles."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(min_count, max_count + 1))
    long_side = rng.uniform(min_long, max_long, n)
    margin = image_size / 8
    boxes = np.column_stack([
        rng.uniform(margin, image_size - margin, n),
        rng.uniform(margin, image_size - margin, n),
        long_side,
        long_side / aspect,
        rng.uniform(-math.pi / 4, 3 * math.pi / 4, n),
    ])
    return canonicalize_array(boxes)
