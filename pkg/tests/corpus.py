"""Random images with plenty of plateaux, shared by several test modules."""
from __future__ import annotations

import numpy as np


def plateau_image(rng, shape, levels=None, block=None):
    """Low-level-count noise upsampled in blocks, so equal runs are common."""
    levels = levels or int(rng.choice([2, 3, 4, 6, 10, 256]))
    block = block or int(rng.integers(1, 5))
    coarse = tuple(max(1, -(-s // block)) for s in shape)
    img = rng.integers(0, levels, size=coarse)
    for axis in range(len(shape)):
        img = np.repeat(img, block, axis=axis)
    img = img[tuple(slice(0, s) for s in shape)]
    return np.ascontiguousarray(img, dtype=np.uint8)


def make_corpus(seed=20240917, n2d=440, n_small3d=30, n_large3d=30):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n2d):
        h, w = (int(v) for v in rng.integers(8, 65, size=2))
        out.append(plateau_image(rng, (h, w)))
    for _ in range(n_small3d):
        out.append(plateau_image(rng, (8, 8, 8)))
    for _ in range(n_large3d):
        out.append(plateau_image(rng, (8, 16, 16)))
    return out
