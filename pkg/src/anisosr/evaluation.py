"""Masked PSNR/SSIM, the per-view cubic-spline baseline and report plumbing."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.interpolate import CubicSpline

from .coordinates import lr_axis_positions
from .degradation import AXES, LRPair, ScaleSpec
from .volume_io import Mask, Volume

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class MetricsReport:
    psnr_db: float
    ssim: float
    mask_voxels: int
    method: str
    scale: float = 0.0
    timing: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "psnr_db": "inf" if math.isinf(self.psnr_db) else self.psnr_db,
            "ssim": self.ssim,
            "mask_voxels": self.mask_voxels,
            "method": self.method,
            "scale": self.scale,
            "timing": self.timing,
        }


def _check_inputs(pred: Volume, ref: Volume, mask: Mask) -> None:
    if pred.shape != ref.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs ref {ref.shape}")
    if mask.data.shape != ref.shape:
        raise ValueError(f"mask shape {mask.data.shape} does not match {ref.shape}")
    if not mask.data.any():
        raise ValueError("mask is empty")


def psnr(pred: Volume, ref: Volume, mask: Mask) -> float:
    """10*log10(1/MSE) over masked voxels, data range 1; inf when identical."""
    _check_inputs(pred, ref, mask)
    diff = pred.data[mask.data] - ref.data[mask.data]
    mse = float(np.mean(diff ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def _windowed_mean(x: np.ndarray, kernel: np.ndarray, norm: np.ndarray) -> np.ndarray:
    out = x.astype(np.float64)
    for axis in range(3):
        out = ndimage.correlate1d(out, kernel, axis=axis, mode="constant", cval=0.0)
    return out / norm


def ssim(pred: Volume, ref: Volume, mask: Mask) -> float:
    """Mean of the 3-D Gaussian-windowed SSIM map over masked voxels.

    Window weights are renormalized where the window overhangs the border.
    """
    _check_inputs(pred, ref, mask)
    kernel = _gaussian_window()
    norm = np.ones(pred.shape, dtype=np.float64)
    for axis in range(3):
        norm = ndimage.correlate1d(norm, kernel, axis=axis, mode="constant", cval=0.0)
    x = pred.data.astype(np.float64)
    y = ref.data.astype(np.float64)
    mu_x = _windowed_mean(x, kernel, norm)
    mu_y = _windowed_mean(y, kernel, norm)
    var_x = _windowed_mean(x * x, kernel, norm) - mu_x ** 2
    var_y = _windowed_mean(y * y, kernel, norm) - mu_y ** 2
    cov = _windowed_mean(x * y, kernel, norm) - mu_x * mu_y
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / \
               ((mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2))
    return float(ssim_map[mask.data].mean())


def cubic_spline_upsample(lr: Volume, scale: ScaleSpec, target_size: int) -> Volume:
    """Natural cubic spline along the degraded axis through the LR samples at
    their HR-unit positions k*N/M, evaluated at the HR node indices."""
    axis = AXES[scale.axis]
    m = lr.data.shape[axis]
    if m != scale.lr_size:
        raise ValueError(f"LR size {m} along {scale.axis} does not match spec {scale.lr_size}")
    if m < 4:
        raise ValueError(f"need at least 4 samples along {scale.axis} for a cubic spline, got {m}")
    positions = lr_axis_positions(scale)
    if target_size != scale.hr_size:
        # same physical frame, different node count: rescale align-corners units
        positions = positions * ((target_size - 1) / (scale.hr_size - 1))
    spline = CubicSpline(positions, lr.data, axis=axis, bc_type="natural")
    hr = spline(np.arange(target_size, dtype=np.float64))
    spacing = list(lr.spacing_mm)
    spacing[axis] = spacing[axis] * m / target_size
    return Volume(np.ascontiguousarray(hr), tuple(spacing), lr.norm)


def evaluate_method(pred_or_pair, ref: Volume, mask: Mask, method: str,
                    scale: float = 0.0, timing: dict | None = None) -> MetricsReport:
    """Metrics for one method: direct for a single volume, per-view averaged
    (cubic spline on each LR view) for an LR pair."""
    if isinstance(pred_or_pair, Volume):
        report = MetricsReport(psnr(pred_or_pair, ref, mask), ssim(pred_or_pair, ref, mask),
                               mask.num_voxels, method, scale, timing or {})
        return report
    if isinstance(pred_or_pair, LRPair):
        pair = pred_or_pair
        views = [cubic_spline_upsample(pair.axial, pair.scale_ax, ref.shape[2]),
                 cubic_spline_upsample(pair.coronal, pair.scale_cor, ref.shape[1])]
        eff = 0.5 * (pair.scale_ax.effective + pair.scale_cor.effective)
    else:  # explicit (axial_up, coronal_up) volumes
        views = list(pred_or_pair)
        eff = scale
    psnrs = [psnr(v, ref, mask) for v in views]
    ssims = [ssim(v, ref, mask) for v in views]
    return MetricsReport(float(np.mean(psnrs)), float(np.mean(ssims)),
                         mask.num_voxels, method, scale or eff, timing or {})


def write_metrics_csv(rows: list[dict], path) -> None:
    """Table-style summary: one row per (dataset, method, scale) aggregate."""
    columns = ["dataset", "method", "scale", "psnr_mean", "psnr_std", "ssim_mean", "ssim_std"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in columns})


def summarize_reports(dataset: str, method: str, scale: float,
                      reports: list[MetricsReport]) -> dict:
    psnrs = np.array([r.psnr_db for r in reports], dtype=np.float64)
    ssims = np.array([r.ssim for r in reports], dtype=np.float64)
    return {"dataset": dataset, "method": method, "scale": scale,
            "psnr_mean": float(psnrs.mean()), "psnr_std": float(psnrs.std()),
            "ssim_mean": float(ssims.mean()), "ssim_std": float(ssims.std())}


_PLANES = {"axial": 2, "coronal": 1, "sagittal": 0}


def _slice_to_image(data: np.ndarray, plane: str, index: int) -> np.ndarray:
    axis = _PLANES[plane]
    if not 0 <= index < data.shape[axis]:
        raise ValueError(f"slice index {index} out of range for axis {axis} "
                         f"of shape {data.shape}")
    sl = np.take(data, index, axis=axis)
    return (np.clip(sl, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def export_comparison_slices(volumes: list[tuple[str, Volume]], plane: str,
                             index: int, path) -> list[str]:
    """One 8-bit grayscale PNG per volume plus a side-by-side montage at `path`.

    Returns the written file paths (per-volume images first, montage last).
    """
    from pathlib import Path

    if plane not in _PLANES:
        raise ValueError(f"plane must be one of {sorted(_PLANES)}, got {plane!r}")
    path = Path(path)
    slices = [(name, _slice_to_image(v.data, plane, index)) for name, v in volumes]
    shapes = {img.shape for _, img in slices}
    if len(shapes) != 1:
        raise ValueError(f"volumes disagree on slice shape: {shapes}")
    written = []
    for name, img in slices:
        out = path.with_name(f"{path.stem}_{name}{path.suffix or '.png'}")
        Image.fromarray(img, mode="L").save(out)
        written.append(str(out))
    sep = np.full((slices[0][1].shape[0], 2), 255, dtype=np.uint8)
    parts = []
    for i, (_, img) in enumerate(slices):
        if i:
            parts.append(sep)
        parts.append(img)
    montage = np.concatenate(parts, axis=1)
    Image.fromarray(montage, mode="L").save(path)
    written.append(str(path))
    return written
