"""Shared normalized reference frame, matching coordinate sets and patch sampling.

Conventions:
  * align-corners mapping per axis: index i in [0, n-1] <-> coord -1 + 2i/(n-1);
  * along a degraded axis, LR voxel k sits at HR index k * (hr_size / lr_size).
    For integer effective scales this reduces to the intersection of the LR and
    HR grids; HR coordinates past the last LR sample carry no measurement and
    never enter a matching set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .degradation import LRPair, ScaleSpec

try:
    import torch
except ImportError:  # trilinear_sample then only accepts numpy arrays
    torch = None

_NODE_SNAP = 1e-9  # voxel units; coordinates this close to a node return the node


def index_to_coord(i, n: int):
    """Align-corners index -> normalized coordinate in [-1, 1]."""
    if n == 1:
        return np.zeros_like(np.asarray(i, dtype=np.float64)) - 1.0
    return -1.0 + 2.0 * np.asarray(i, dtype=np.float64) / (n - 1)


def coord_to_index(x, n: int):
    """Inverse of index_to_coord (continuous index units)."""
    if n == 1:
        return np.zeros_like(np.asarray(x, dtype=np.float64))
    return (np.asarray(x, dtype=np.float64) + 1.0) * (n - 1) / 2.0


@dataclass(frozen=True)
class ReferenceFrame:
    """The shared HR frame: hr_shape plus the align-corners mapping per axis."""

    hr_shape: tuple[int, int, int]

    def __post_init__(self):
        if len(self.hr_shape) != 3 or any(n < 1 for n in self.hr_shape):
            raise ValueError(f"invalid hr_shape {self.hr_shape}")
        object.__setattr__(self, "hr_shape", tuple(int(n) for n in self.hr_shape))

    def to_coord(self, i, axis: int):
        return index_to_coord(i, self.hr_shape[axis])

    def to_index(self, x, axis: int):
        return coord_to_index(x, self.hr_shape[axis])


@dataclass(frozen=True)
class CoordinateSet:
    """Normalized coordinates of one view plus the LR intensities measured there."""

    coords: np.ndarray          # (n, 3) float64 in [-1, 1]
    view: str                   # "axial" | "coronal"
    targets: np.ndarray | None  # (n,) float64, None while unfilled

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 3)
        if self.view not in ("axial", "coronal"):
            raise ValueError(f"view must be axial or coronal, got {self.view!r}")
        if coords.size and (coords.min() < -1 - 1e-9 or coords.max() > 1 + 1e-9):
            raise ValueError("coordinate components must lie in [-1, 1]")
        object.__setattr__(self, "coords", coords)
        if self.targets is not None:
            targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
            if len(targets) != len(coords):
                raise ValueError("coords and targets must have the same length")
            object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return len(self.coords)


@dataclass(frozen=True)
class PatchPair:
    """One axial and one coronal LR patch covering the same HR cube.

    hr_cube_origin is integer HR index units; LR slices/columns of the two
    views start at ax_slice_start / cor_col_start in their own grids. A patch
    may also wrap whole LR volumes (cube = full HR extent).
    """

    ax_patch: np.ndarray       # (Lh, Lw, n_ax_slices)
    cor_patch: np.ndarray      # (Lh, n_cor_cols, Ld)
    hr_cube_origin: tuple[int, int, int]
    hr_cube_size: tuple[int, int, int]
    ax_slice_start: int
    cor_col_start: int
    eff_ax: float
    eff_cor: float

    @property
    def local_frame(self) -> ReferenceFrame:
        return ReferenceFrame(self.hr_cube_size)

    def view_local_coords(self, coords: np.ndarray, view: str) -> np.ndarray:
        """Cube-local normalized coords -> view-patch-local normalized coords.

        Positions past a view's measurement support are border-clamped onto it.
        """
        coords = np.asarray(coords, dtype=np.float64).reshape(-1, 3)
        lh, lw, ld = self.hr_cube_size
        oi, oj, ok = self.hr_cube_origin
        p_h = coord_to_index(coords[:, 0], lh) + oi
        p_w = coord_to_index(coords[:, 1], lw) + oj
        p_d = coord_to_index(coords[:, 2], ld) + ok
        if view == "axial":
            nh, nw, ns = self.ax_patch.shape
            v_h = p_h - oi
            v_w = p_w - oj
            v_s = p_d / self.eff_ax - self.ax_slice_start
            sizes = (nh, nw, ns)
            local = np.stack([v_h, v_w, v_s], axis=1)
        elif view == "coronal":
            nh, nc, nd = self.cor_patch.shape
            v_h = p_h - oi
            v_c = p_w / self.eff_cor - self.cor_col_start
            v_d = p_d - ok
            sizes = (nh, nc, nd)
            local = np.stack([v_h, v_c, v_d], axis=1)
        else:
            raise ValueError(f"unknown view {view!r}")
        out = np.empty_like(local)
        for a, n in enumerate(sizes):
            v = np.clip(local[:, a], 0.0, n - 1.0)
            out[:, a] = index_to_coord(v, n)
        return out


def lr_sample_positions(frame: ReferenceFrame, view: str, scale: ScaleSpec) -> CoordinateSet:
    """Normalized coordinates of every LR voxel of one view in the shared frame.

    Targets are left unfilled; this is the coordinate skeleton of M_view.
    """
    h, w, d = frame.hr_shape
    ax_idx = 2 if view == "axial" else 1
    if scale.hr_size != frame.hr_shape[ax_idx]:
        raise ValueError(f"scale hr_size {scale.hr_size} inconsistent with frame "
                         f"axis size {frame.hr_shape[ax_idx]}")
    positions = lr_axis_positions(scale)
    if view == "axial":
        grids = np.meshgrid(np.arange(h, dtype=np.float64),
                            np.arange(w, dtype=np.float64),
                            positions, indexing="ij")
    else:
        grids = np.meshgrid(np.arange(h, dtype=np.float64),
                            positions,
                            np.arange(d, dtype=np.float64), indexing="ij")
    coords = np.stack([frame.to_coord(grids[a].ravel(), a) for a in range(3)], axis=1)
    return CoordinateSet(coords, view, None)


def lr_axis_positions(scale: ScaleSpec) -> np.ndarray:
    """HR-unit positions of the LR samples along the degraded axis: k * N/M."""
    return np.arange(scale.lr_size, dtype=np.float64) * (scale.hr_size / scale.lr_size)


def matching_sets(pair: LRPair, frame: ReferenceFrame) -> tuple[CoordinateSet, CoordinateSet]:
    """M_ax and M_cor: LR sample coordinates with their measured intensities."""
    if frame.hr_shape != tuple(pair.hr_shape):
        raise ValueError(f"pair hr_shape {pair.hr_shape} does not match frame {frame.hr_shape}")
    m_ax = lr_sample_positions(frame, "axial", pair.scale_ax)
    m_cor = lr_sample_positions(frame, "coronal", pair.scale_cor)
    return (CoordinateSet(m_ax.coords, "axial", pair.axial.data.reshape(-1)),
            CoordinateSet(m_cor.coords, "coronal", pair.coronal.data.reshape(-1)))


def patch_cube_side(pair: LRPair, slices_per_patch: int = 10) -> int:
    """HR cube side so that `slices_per_patch` LR slices span it: round(10 * e)."""
    eff_mean = 0.5 * (pair.scale_ax.effective + pair.scale_cor.effective)
    return int(round(slices_per_patch * eff_mean))


def sample_patch_pair(pair: LRPair, rng: np.random.Generator,
                      slices_per_patch: int = 10) -> PatchPair:
    """Random patch pair: an HR cube of side round(10*e) seen as 10 axial LR
    slices and 10 coronal LR columns, snapped to both views' grids."""
    h, w, d = pair.hr_shape
    eff_ax = pair.scale_ax.effective
    eff_cor = pair.scale_cor.effective
    side = patch_cube_side(pair, slices_per_patch)
    lr_d = pair.scale_ax.lr_size
    lr_w = pair.scale_cor.lr_size
    if side > h or side > w or side > d or slices_per_patch > lr_d or slices_per_patch > lr_w:
        raise ValueError(f"volume of shape {pair.hr_shape} too small for a cube of "
                         f"side {side} with {slices_per_patch} LR slices")

    i0 = int(rng.integers(0, h - side + 1))
    s0 = int(rng.integers(0, lr_d - slices_per_patch + 1))
    c0 = int(rng.integers(0, lr_w - slices_per_patch + 1))
    k0 = min(max(int(round(s0 * eff_ax)), 0), d - side)
    j0 = min(max(int(round(c0 * eff_cor)), 0), w - side)

    ax_patch = pair.axial.data[i0:i0 + side, j0:j0 + side, s0:s0 + slices_per_patch]
    cor_patch = pair.coronal.data[i0:i0 + side, c0:c0 + slices_per_patch, k0:k0 + side]
    return PatchPair(np.ascontiguousarray(ax_patch), np.ascontiguousarray(cor_patch),
                     (i0, j0, k0), (side, side, side), s0, c0, eff_ax, eff_cor)


def full_volume_patch(pair: LRPair) -> PatchPair:
    """A PatchPair wrapping the whole LR volumes; its cube is the full HR frame."""
    return PatchPair(pair.axial.data, pair.coronal.data,
                     (0, 0, 0), tuple(pair.hr_shape), 0, 0,
                     pair.scale_ax.effective, pair.scale_cor.effective)


def sample_patch_coordinates(pp: PatchPair, n: int,
                             rng: np.random.Generator) -> tuple[CoordinateSet, CoordinateSet]:
    """Draw n axial and n coronal matching coordinates uniformly with replacement.

    Coordinates are cube-local; targets are the LR intensities at the drawn
    positions. Each sample corresponds to one HR voxel coordinate of its view.
    """
    if n < 1:
        raise ValueError(f"need at least one sample, got n={n}")
    lh, lw, ld = pp.hr_cube_size
    oi, oj, ok = pp.hr_cube_origin
    nh_a, nw_a, ns = pp.ax_patch.shape
    nh_c, nc, nd = pp.cor_patch.shape
    if min(nh_a, nw_a, ns, nh_c, nc, nd) < 1:
        raise ValueError("empty restricted matching set")

    def local(pos, size):
        return index_to_coord(np.clip(pos, 0.0, size - 1.0), size)

    ia = rng.integers(0, nh_a, size=n)
    ja = rng.integers(0, nw_a, size=n)
    sa = rng.integers(0, ns, size=n)
    ax_coords = np.stack([
        local(ia.astype(np.float64), lh),
        local(ja.astype(np.float64), lw),
        local((sa + pp.ax_slice_start) * pp.eff_ax - ok, ld),
    ], axis=1)
    ax_targets = pp.ax_patch[ia, ja, sa].astype(np.float64)

    ic = rng.integers(0, nh_c, size=n)
    cc = rng.integers(0, nc, size=n)
    kc = rng.integers(0, nd, size=n)
    cor_coords = np.stack([
        local(ic.astype(np.float64), lh),
        local((cc + pp.cor_col_start) * pp.eff_cor - oj, lw),
        local(kc.astype(np.float64), ld),
    ], axis=1)
    cor_targets = pp.cor_patch[ic, cc, kc].astype(np.float64)

    return (CoordinateSet(ax_coords, "axial", ax_targets),
            CoordinateSet(cor_coords, "coronal", cor_targets))


def trilinear_sample(fmap, coords: np.ndarray):
    """Sample a (h', w', d', c) feature map at local normalized coordinates.

    Uses the align-corners mapping with 8-corner weights; a coordinate exactly
    on a node returns that node's vector. Accepts a numpy array or a torch
    tensor (gradients flow to the feature map). Returns (n, c) in kind.
    """
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 3)
    if coords.size and (coords.min() < -1 - _NODE_SNAP or coords.max() > 1 + _NODE_SNAP):
        raise ValueError("coordinates outside [-1, 1]")
    shape = fmap.shape
    if len(shape) != 4:
        raise ValueError(f"feature map must be 4-D (h, w, d, c), got shape {tuple(shape)}")

    idx0, idx1, frac = [], [], []
    for a in range(3):
        n = shape[a]
        u = coord_to_index(np.clip(coords[:, a], -1.0, 1.0), n)
        snapped = np.round(u)
        u = np.where(np.abs(u - snapped) < _NODE_SNAP, snapped, u)
        lo = np.clip(np.floor(u), 0, max(n - 2, 0)).astype(np.int64)
        idx0.append(lo)
        idx1.append(np.minimum(lo + 1, n - 1))
        frac.append(u - lo)

    wx, wy, wz = frac
    corners = []
    for bx, ix in ((1 - wx, idx0[0]), (wx, idx1[0])):
        for by, iy in ((1 - wy, idx0[1]), (wy, idx1[1])):
            for bz, iz in ((1 - wz, idx0[2]), (wz, idx1[2])):
                corners.append((bx * by * bz, ix, iy, iz))

    if torch is not None and isinstance(fmap, torch.Tensor):
        out = fmap.new_zeros((coords.shape[0], shape[3]))
        for weight, ix, iy, iz in corners:
            w_t = torch.as_tensor(weight, dtype=fmap.dtype, device=fmap.device)
            gathered = fmap[torch.from_numpy(ix), torch.from_numpy(iy), torch.from_numpy(iz)]
            out = out + gathered * w_t.unsqueeze(1)
        return out
    fmap = np.asarray(fmap)
    out = np.zeros((coords.shape[0], shape[3]), dtype=np.result_type(fmap.dtype, np.float64))
    for weight, ix, iy, iz in corners:
        out += fmap[ix, iy, iz] * weight[:, None]
    return out
