"""Synthetic HR phantoms: low-frequency sinusoids plus Gaussian blobs inside an
ellipsoidal support on zero background, normalized to [0, 1].

No band limit below the x4 LR Nyquist is imposed; the support edge is sharp.
"""

from __future__ import annotations

import numpy as np

from .volume_io import Volume

MIN_SIZE = 20  # smallest volume that still fits one x2 patch cube


def make_phantom(size: int, rng: np.random.Generator,
                 spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> Volume:
    if size < MIN_SIZE:
        raise ValueError(f"size {size} too small for patch geometry (need >= {MIN_SIZE})")
    grid = np.stack(np.meshgrid(*[np.arange(size, dtype=np.float64)] * 3,
                                indexing="ij"), axis=-1)

    center = size / 2.0 + rng.uniform(-0.03, 0.03, size=3) * size
    semi = rng.uniform(0.33, 0.42, size=3) * size
    support = (((grid - center) / semi) ** 2).sum(axis=-1) <= 1.0

    tex = np.zeros((size, size, size), dtype=np.float64)
    n_waves = int(rng.integers(6, 11))
    for _ in range(n_waves):
        cycles = rng.uniform(0.5, 4.0, size=3) * rng.choice([-1, 1], size=3)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.3, 1.0)
        tex += amp * np.sin(2 * np.pi * (grid * cycles / size).sum(axis=-1) + phase)
    n_blobs = int(rng.integers(4, 9))
    for _ in range(n_blobs):
        blob_center = center + rng.uniform(-0.6, 0.6, size=3) * semi
        sigma = rng.uniform(size / 16.0, size / 6.0)
        amp = rng.uniform(-1.5, 1.5)
        tex += amp * np.exp(-((grid - blob_center) ** 2).sum(axis=-1) / (2 * sigma ** 2))

    inside = tex[support]
    lo, hi = inside.min(), inside.max()
    unit = (tex - lo) / (hi - lo)
    data = np.where(support, 0.25 + 0.75 * unit, 0.0)
    return Volume(np.clip(data, 0.0, 1.0), spacing)


def make_phantoms(n: int, size: int, seed: int,
                  spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> list[Volume]:
    """n deterministic phantoms; phantom i uses a child seed of `seed`."""
    if n < 1:
        raise ValueError(f"need n >= 1 phantoms, got {n}")
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2 ** 31, size=n)
    return [make_phantom(size, np.random.default_rng(int(s)), spacing) for s in seeds]
