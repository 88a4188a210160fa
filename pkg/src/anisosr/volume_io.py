"""Volumes, intensity normalization, foreground masks and background cropping.

Array axes are (h, w, d) throughout the package; the axial view is the one
degraded along d, the coronal view the one degraded along w.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import nifti


@dataclass(frozen=True)
class IntensityNormalization:
    """Affine map applied to the original intensities: [lo, hi] -> [0, 1]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"degenerate intensity range: lo={self.lo}, hi={self.hi}")


@dataclass(frozen=True)
class Volume:
    """A 3-D intensity array with physical spacing.

    `data` is made read-only at construction; treat volumes as immutable.
    """

    data: np.ndarray
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)
    norm: IntensityNormalization | None = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValueError(f"non-3-D payload: got {data.ndim}-D array")
        if min(data.shape) < 1:
            raise ValueError(f"all dimensions must be >= 1, got shape {data.shape}")
        spacing = tuple(float(s) for s in self.spacing_mm)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise ValueError(f"spacing components must be positive, got {spacing}")
        data = data.copy() if data.flags.writeable else data
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing_mm", spacing)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class Mask:
    """Boolean foreground mask, same shape as its volume."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValueError("mask must be 3-D")
        data = data.astype(bool)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def num_voxels(self) -> int:
        return int(self.data.sum())


def load_volume(path) -> Volume:
    """Load a 3-D NIfTI volume; spacing comes from the pixdim fields."""
    data, spacing = nifti.read_nifti(path)
    if data.ndim != 3:
        raise ValueError(f"non-3-D payload: {path} has {data.ndim} dimensions")
    return Volume(np.asarray(data, dtype=np.float64), spacing[:3])


def save_volume(v: Volume, path) -> None:
    """Write a volume as float32 NIfTI-1 (round-trips data/spacing within 1e-6)."""
    nifti.write_nifti(path, v.data.astype(np.float32), v.spacing_mm)


def save_mask(m: Mask, path) -> None:
    nifti.write_nifti(path, m.data.astype(np.uint8), (1.0, 1.0, 1.0))


def load_mask(path) -> Mask:
    data, _ = nifti.read_nifti(path)
    return Mask(data > 0)


def normalize_intensity(v: Volume) -> Volume:
    """Affinely map [min, max] -> [0, 1]; the map is recorded on the result."""
    lo = float(v.data.min())
    hi = float(v.data.max())
    if hi == lo:
        raise ValueError("degenerate intensity range: volume is constant")
    scaled = (v.data - lo) / (hi - lo)
    return Volume(scaled, v.spacing_mm, norm=IntensityNormalization(lo, hi))


def foreground_mask(v: Volume, threshold: float = 0.0) -> Mask:
    """Threshold, keep the largest 6-connected component, close with a 3^3 element.

    Expects a [0,1]-normalized volume.
    """
    raw = v.data > threshold
    if not raw.any():
        raise ValueError(f"empty mask: no voxels above threshold {threshold}")
    labels, n = ndimage.label(raw)  # default structure = 6-connectivity
    if n > 1:
        counts = np.bincount(labels.ravel())
        counts[0] = 0
        raw = labels == int(np.argmax(counts))
    closed = ndimage.binary_closing(raw, structure=np.ones((3, 3, 3), dtype=bool))
    # closing with a zero border can only shrink at the array edge; keep the union
    return Mask(closed | raw)


def crop_background(v: Volume, m: Mask, margin: int = 0) -> tuple[Volume, Mask, tuple[int, int, int]]:
    """Crop to the mask's bounding box plus `margin`, clamped to the volume.

    Returns (cropped volume, cropped mask, crop offset in source index units).
    """
    if not m.data.any():
        raise ValueError("cannot crop with an empty mask")
    if m.data.shape != v.data.shape:
        raise ValueError("mask shape does not match volume shape")
    lo = []
    hi = []
    for axis in range(3):
        proj = np.any(m.data, axis=tuple(a for a in range(3) if a != axis))
        idx = np.nonzero(proj)[0]
        lo.append(max(0, int(idx[0]) - margin))
        hi.append(min(v.data.shape[axis], int(idx[-1]) + 1 + margin))
    sl = tuple(slice(a, b) for a, b in zip(lo, hi))
    return Volume(v.data[sl], v.spacing_mm, v.norm), Mask(m.data[sl]), tuple(lo)
