"""Dense reconstruction of the SR volume from an LR pair and trained weights."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import torch

from .coordinates import index_to_coord, matching_sets, ReferenceFrame, trilinear_sample
from .degradation import LRPair
from .network import ModelParams, decode, encode
from .volume_io import Volume


@dataclass(frozen=True)
class InferenceConfig:
    chunk_size: int = 65536
    clamp: bool = True
    target_shape: tuple[int, int, int] | None = None
    encode_voxel_budget: int = 16_000_000  # LR voxels above which encoding is tiled

    def __post_init__(self):
        if self.chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1, got {self.chunk_size}")


def _encode_tiled(params: ModelParams, data: np.ndarray, budget: int) -> torch.Tensor:
    """Encode a full LR volume, tiling with receptive-field overlap if needed.

    Tiles overlap by the encoder's receptive radius and only tile cores are
    kept, so the result equals a single whole-volume encode.
    """
    shape = data.shape
    if int(np.prod(shape)) <= budget:
        return encode(params, data)
    r = params.encoder_config.receptive_radius
    core = max(2 * r, int(round((budget ** (1 / 3)))) - 2 * r)
    fmap = None
    for i0 in range(0, shape[0], core):
        for j0 in range(0, shape[1], core):
            for k0 in range(0, shape[2], core):
                lo = (max(i0 - r, 0), max(j0 - r, 0), max(k0 - r, 0))
                hi = (min(i0 + core + r, shape[0]), min(j0 + core + r, shape[1]),
                      min(k0 + core + r, shape[2]))
                tile = data[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
                tile_fmap = encode(params, tile)
                if fmap is None:
                    fmap = tile_fmap.new_zeros((*shape, tile_fmap.shape[-1]))
                c0 = (i0 - lo[0], j0 - lo[1], k0 - lo[2])
                c1 = (min(i0 + core, shape[0]) - lo[0], min(j0 + core, shape[1]) - lo[1],
                      min(k0 + core, shape[2]) - lo[2])
                fmap[i0:i0 + c1[0] - c0[0], j0:j0 + c1[1] - c0[1], k0:k0 + c1[2] - c0[2]] = \
                    tile_fmap[c0[0]:c1[0], c0[1]:c1[1], c0[2]:c1[2]]
    return fmap


def _view_axis_coords(pair: LRPair, target_shape, view: str) -> list[np.ndarray]:
    """Per-axis view-local normalized coordinates for the target grid nodes."""
    hr_shape = pair.hr_shape
    lr_shape = pair.axial.shape if view == "axial" else pair.coronal.shape
    eff = {"axial": (1.0, 1.0, pair.scale_ax.effective),
           "coronal": (1.0, pair.scale_cor.effective, 1.0)}[view]
    out = []
    for a in range(3):
        t = np.arange(target_shape[a], dtype=np.float64)
        if target_shape[a] == 1:
            p = np.zeros(1)
        else:
            p = t * ((hr_shape[a] - 1) / (target_shape[a] - 1))
        v = np.clip(p / eff[a], 0.0, lr_shape[a] - 1.0)
        out.append(index_to_coord(v, lr_shape[a]))
    return out


def super_resolve_timed(params: ModelParams, pair: LRPair,
                        cfg: InferenceConfig | None = None) -> tuple[Volume, dict]:
    """SR volume plus a timing split {encode_s, decode_s, total_s}."""
    cfg = cfg or InferenceConfig()
    t0 = time.perf_counter()
    target_shape = tuple(int(n) for n in (cfg.target_shape or pair.hr_shape))
    if len(target_shape) != 3 or min(target_shape) < 1:
        raise ValueError(f"invalid target shape {target_shape}")

    with torch.no_grad():
        fmap_ax = _encode_tiled(params, pair.axial.data, cfg.encode_voxel_budget)
        fmap_cor = _encode_tiled(params, pair.coronal.data, cfg.encode_voxel_budget)
        t_enc = time.perf_counter()

        ax_axes = _view_axis_coords(pair, target_shape, "axial")
        cor_axes = _view_axis_coords(pair, target_shape, "coronal")
        n_total = int(np.prod(target_shape))
        out = np.empty(n_total, dtype=np.float64)
        nw, nd = target_shape[1], target_shape[2]
        for start in range(0, n_total, cfg.chunk_size):
            stop = min(start + cfg.chunk_size, n_total)
            flat = np.arange(start, stop)
            ii, rem = np.divmod(flat, nw * nd)
            jj, kk = np.divmod(rem, nd)
            ax_coords = np.stack([ax_axes[0][ii], ax_axes[1][jj], ax_axes[2][kk]], axis=1)
            cor_coords = np.stack([cor_axes[0][ii], cor_axes[1][jj], cor_axes[2][kk]], axis=1)
            v_ax = trilinear_sample(fmap_ax, ax_coords)
            v_cor = trilinear_sample(fmap_cor, cor_coords)
            pred = decode(params, torch.cat([v_ax, v_cor], dim=1))
            out[start:stop] = pred.detach().cpu().numpy().astype(np.float64)
        t_dec = time.perf_counter()

    if cfg.clamp:
        out = np.clip(out, 0.0, 1.0)
    base = pair.axial.spacing_mm[0]
    spacing = tuple(
        base if target_shape[a] == pair.hr_shape[a] or target_shape[a] == 1
        else base * (pair.hr_shape[a] - 1) / (target_shape[a] - 1)
        for a in range(3))
    volume = Volume(out.reshape(target_shape), spacing, pair.axial.norm)
    timing = {"encode_s": t_enc - t0, "decode_s": t_dec - t_enc,
              "total_s": time.perf_counter() - t0}
    return volume, timing


def super_resolve(params: ModelParams, pair: LRPair,
                  cfg: InferenceConfig | None = None) -> Volume:
    return super_resolve_timed(params, pair, cfg)[0]


def pair_consistency_by_view(sr: Volume, pair: LRPair) -> tuple[float, float, float]:
    """MSE of the SR volume sampled at each view's matching coordinates."""
    frame = ReferenceFrame(pair.hr_shape)
    m_ax, m_cor = matching_sets(pair, frame)
    fmap = sr.data[..., None]
    errors = []
    # normalized coords are frame-invariant: any SR shape spans the same [-1,1] frame
    for cs in (m_ax, m_cor):
        sampled = trilinear_sample(fmap, cs.coords)[:, 0]
        errors.append(np.mean((sampled - cs.targets) ** 2))
    total = (len(m_ax) * errors[0] + len(m_cor) * errors[1]) / (len(m_ax) + len(m_cor))
    return float(errors[0]), float(errors[1]), float(total)


def reconstruct_pair_consistency(sr: Volume, pair: LRPair) -> float:
    """Pooled MSE between the SR volume and every LR measurement it should honour."""
    return pair_consistency_by_view(sr, pair)[2]
