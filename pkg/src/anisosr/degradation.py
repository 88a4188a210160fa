"""Anisotropic low-resolution simulation by frequency-domain truncation.

A volume is degraded along one axis by keeping the `lr_size` centred
lowest-frequency DFT bins and inverse-transforming at the reduced length.
The DC amplitude convention preserves the mean exactly; under this scheme
LR sample k sits at HR index k * (hr_size / lr_size).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .volume_io import Volume, load_volume, save_volume

AXES = {"h": 0, "w": 1, "d": 2}


@dataclass(frozen=True)
class ScaleSpec:
    """Downsampling bookkeeping for one axis.

    `requested` is the nominal scale; `effective = hr_size / lr_size` is what the
    rounding to an integer grid actually produced.
    """

    requested: float
    axis: str
    hr_size: int
    lr_size: int

    def __post_init__(self):
        if self.axis not in ("w", "d"):
            raise ValueError(f"downsampled axis must be 'w' or 'd', got {self.axis!r}")
        if self.lr_size < 2:
            raise ValueError(f"lr_size must be >= 2, got {self.lr_size}")
        if self.lr_size > self.hr_size:
            raise ValueError(f"lr_size {self.lr_size} exceeds hr_size {self.hr_size}")

    @property
    def effective(self) -> float:
        return self.hr_size / self.lr_size

    @classmethod
    def from_requested(cls, hr_size: int, requested: float, axis: str) -> "ScaleSpec":
        if requested < 1:
            raise ValueError(f"scale must be >= 1, got {requested}")
        lr_size = int(round(hr_size / requested))
        if lr_size < 2:
            raise ValueError(f"scale {requested} too large for axis size {hr_size}")
        return cls(float(requested), axis, int(hr_size), lr_size)

    def to_dict(self) -> dict:
        return {"requested": self.requested, "axis": self.axis,
                "hr_size": self.hr_size, "lr_size": self.lr_size,
                "effective": self.effective}

    @classmethod
    def from_dict(cls, d: dict) -> "ScaleSpec":
        return cls(float(d["requested"]), str(d["axis"]), int(d["hr_size"]), int(d["lr_size"]))


@dataclass(frozen=True)
class LRPair:
    """An axial (degraded along d) + coronal (degraded along w) volume pair
    sharing one HR reference frame of shape `hr_shape`."""

    axial: Volume
    coronal: Volume
    scale_ax: ScaleSpec
    scale_cor: ScaleSpec
    hr_shape: tuple[int, int, int]

    def __post_init__(self):
        h, w, d = self.hr_shape
        if self.axial.shape != (h, w, self.scale_ax.lr_size):
            raise ValueError(f"axial shape {self.axial.shape} inconsistent with "
                             f"hr_shape {self.hr_shape} and lr_size {self.scale_ax.lr_size}")
        if self.coronal.shape != (h, self.scale_cor.lr_size, d):
            raise ValueError(f"coronal shape {self.coronal.shape} inconsistent with "
                             f"hr_shape {self.hr_shape} and lr_size {self.scale_cor.lr_size}")
        if self.scale_ax.axis != "d" or self.scale_cor.axis != "w":
            raise ValueError("axial must be degraded along d, coronal along w")


def _truncate_spectrum(spectrum: np.ndarray, axis: int, lr_size: int) -> np.ndarray:
    """Keep the lr_size centred bins of an fftshift'd spectrum along `axis`.

    For even lr_size the retained band is {-M/2, ..., M/2 - 1}; the unpaired
    Nyquist slot is Hermitian-symmetrized with its +M/2 partner so the inverse
    transform of a real signal is exactly real.
    """
    n = spectrum.shape[axis]
    center = n // 2
    lo = center - lr_size // 2
    hi = lo + lr_size
    sl = [slice(None)] * spectrum.ndim
    sl[axis] = slice(lo, hi)
    kept = spectrum[tuple(sl)].copy()
    if lr_size % 2 == 0 and hi < n:  # +M/2 partner exists in the source spectrum
        lo_slot = [slice(None)] * spectrum.ndim
        lo_slot[axis] = slice(0, 1)
        partner = [slice(None)] * spectrum.ndim
        partner[axis] = slice(hi, hi + 1)
        # average of the +-M/2 bins is real for real input, so the inverse is too
        kept[tuple(lo_slot)] = 0.5 * (kept[tuple(lo_slot)] + spectrum[tuple(partner)])
    return kept


def kspace_downsample_axis(v: Volume, axis: str, lr_size: int) -> Volume:
    """Downsample one axis by truncating its spectrum to lr_size centred bins.

    The result is scaled by lr_size/hr_size so the mean (DC) is preserved.
    """
    ax = AXES[axis] if isinstance(axis, str) else int(axis)
    n = v.data.shape[ax]
    if not 2 <= lr_size <= n:
        raise ValueError(f"lr_size must be in [2, {n}], got {lr_size}")

    spectrum = np.fft.fftshift(np.fft.fft(v.data.astype(np.float64), axis=ax), axes=ax)
    kept = _truncate_spectrum(spectrum, ax, lr_size)
    lr_complex = np.fft.ifft(np.fft.ifftshift(kept, axes=ax), axis=ax) * (lr_size / n)

    residue = np.abs(lr_complex.imag).max()
    scale_ref = max(float(np.abs(lr_complex.real).max()), 1.0)
    assert residue <= 1e-9 * scale_ref, f"imaginary residue {residue:g} exceeds tolerance"

    spacing = list(v.spacing_mm)
    spacing[ax] *= n / lr_size
    return Volume(np.ascontiguousarray(lr_complex.real), tuple(spacing), v.norm)


def simulate_lr_pair(hr: Volume, scale: float, rng_seed: int | None = None) -> LRPair:
    """Degrade an HR volume along d (axial view) and along w (coronal view)."""
    h, w, d = hr.shape
    if not scale > 1:
        raise ValueError(f"scale must exceed 1, got {scale}")
    if scale > min(w, d) / 2:
        raise ValueError(f"scale {scale} too large for volume of shape {hr.shape}")
    spec_ax = ScaleSpec.from_requested(d, scale, "d")
    spec_cor = ScaleSpec.from_requested(w, scale, "w")
    axial = kspace_downsample_axis(hr, "d", spec_ax.lr_size)
    coronal = kspace_downsample_axis(hr, "w", spec_cor.lr_size)
    return LRPair(axial, coronal, spec_ax, spec_cor, (h, w, d))


def sample_training_scale(rng: np.random.Generator, low: float = 2.0, high: float = 4.0) -> float:
    """Uniform random scale in [low, high]."""
    return float(rng.uniform(low, high))


def save_lr_pair(pair: LRPair, ax_path, cor_path, sidecar_path, rng_seed=None, extra=None) -> None:
    """Write the two volumes plus a JSON sidecar with the scale bookkeeping."""
    save_volume(pair.axial, ax_path)
    save_volume(pair.coronal, cor_path)
    sidecar = {
        "axial": str(ax_path),
        "coronal": str(cor_path),
        "hr_shape": list(pair.hr_shape),
        "scale_ax": pair.scale_ax.to_dict(),
        "scale_cor": pair.scale_cor.to_dict(),
        "rng_seed": rng_seed,
    }
    if extra:
        sidecar.update(extra)
    with open(sidecar_path, "w") as fh:
        json.dump(sidecar, fh, indent=2)


def load_lr_pair(sidecar_path) -> LRPair:
    with open(sidecar_path) as fh:
        sidecar = json.load(fh)
    axial = load_volume(sidecar["axial"])
    coronal = load_volume(sidecar["coronal"])
    return LRPair(axial, coronal,
                  ScaleSpec.from_dict(sidecar["scale_ax"]),
                  ScaleSpec.from_dict(sidecar["scale_cor"]),
                  tuple(sidecar["hr_shape"]))


def load_lr_pair_from_volumes(ax_path, cor_path) -> LRPair:
    """Build an LRPair from two NIfTI files alone, inferring scales from shapes."""
    axial = load_volume(ax_path)
    coronal = load_volume(cor_path)
    h_a, w_a, lr_d = axial.shape
    h_c, lr_w, d = coronal.shape
    if h_a != h_c:
        raise ValueError(f"pair shapes inconsistent along h: {axial.shape} vs {coronal.shape}")
    if w_a < lr_w or d < lr_d:
        raise ValueError(f"pair shapes inconsistent: {axial.shape} vs {coronal.shape}")
    hr_shape = (h_a, w_a, d)
    spec_ax = ScaleSpec(d / lr_d, "d", d, lr_d)
    spec_cor = ScaleSpec(w_a / lr_w, "w", w_a, lr_w)
    return LRPair(axial, coronal, spec_ax, spec_cor, hr_shape)
