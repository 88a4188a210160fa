"""Independent brute-force reference implementations used by the tests.

Everything here is deliberately written the slow, literal way (explicit DFT
sums, per-voxel loops) so it shares no code path with the package.
"""

from __future__ import annotations

import numpy as np


def dft_crop_1d(x: np.ndarray, lr_size: int) -> np.ndarray:
    """Literal centred DFT truncation of a 1-D signal, O(N*M) sums.

    Keeps the symmetric band around DC: for odd M the band {-(M-1)/2..(M-1)/2},
    for even M the band {-M/2..M/2-1}. No Nyquist symmetrization, so for even M
    this matches the package only on inputs without +-M/2 content.
    """
    n = len(x)
    m = lr_size
    lo = -(m // 2)
    hi = lo + m
    spectrum = {}
    for f in range(lo, hi):
        acc = 0.0 + 0.0j
        for t in range(n):
            acc += x[t] * np.exp(-2j * np.pi * f * t / n)
        spectrum[f] = acc
    y = np.zeros(m, dtype=complex)
    for k in range(m):
        for f, coef in spectrum.items():
            y[k] += coef * np.exp(2j * np.pi * f * k / m)
    return (y / n).real


def bandlimited_signal(n: int, modes: list[tuple[int, float, float]]) -> np.ndarray:
    """x[t] = sum of a*cos(2*pi*f*t/n + phase); analytic, evaluable anywhere."""
    t = np.arange(n, dtype=np.float64)
    return bandlimited_eval(t, n, modes)


def bandlimited_eval(t: np.ndarray, n: int, modes: list[tuple[int, float, float]]) -> np.ndarray:
    out = np.zeros_like(np.asarray(t, dtype=np.float64))
    for f, amp, phase in modes:
        out += amp * np.cos(2 * np.pi * f * np.asarray(t, dtype=np.float64) / n + phase)
    return out


def trilinear_8corner(fmap: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Per-coordinate 8-corner interpolation under the align-corners mapping."""
    fmap = np.asarray(fmap, dtype=np.float64)
    h, w, d, c = fmap.shape
    out = np.zeros((len(coords), c))
    for row, (x, y, z) in enumerate(coords):
        us = []
        for val, n in ((x, h), (y, w), (z, d)):
            us.append(0.0 if n == 1 else (val + 1.0) * (n - 1) / 2.0)
        acc = np.zeros(c)
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    weight = 1.0
                    idx = []
                    for axis, (u, n) in enumerate(zip(us, (h, w, d))):
                        i0 = min(max(int(np.floor(u)), 0), max(n - 2, 0))
                        frac = u - i0
                        corner = (dx, dy, dz)[axis]
                        weight *= frac if corner else (1.0 - frac)
                        idx.append(min(i0 + corner, n - 1))
                    acc += weight * fmap[idx[0], idx[1], idx[2]]
        out[row] = acc
    return out


def grid_intersection_set(hr_shape: tuple[int, int, int], view: str, e: int,
                          lr_data: np.ndarray) -> set[tuple[float, float, float, float]]:
    """Eq.-style integer-grid intersection for an integer scale e.

    Returns {(cx, cy, cz, target)} with align-corners normalized coordinates.
    """
    h, w, d = hr_shape

    def norm(i, n):
        return -1.0 + 2.0 * i / (n - 1)

    out = set()
    if view == "axial":
        for i in range(h):
            for j in range(w):
                for k in range(0, d, e):
                    out.add((norm(i, h), norm(j, w), norm(k, d), float(lr_data[i, j, k // e])))
    else:
        for i in range(h):
            for j in range(0, w, e):
                for k in range(d):
                    out.add((norm(i, h), norm(j, w), norm(k, d), float(lr_data[i, j // e, k])))
    return out


def ssim_literal(x: np.ndarray, y: np.ndarray, window: int = 11, sigma: float = 1.5,
                 k1: float = 0.01, k2: float = 0.03) -> np.ndarray:
    """Per-voxel SSIM map by explicit windowed sums, weights renormalized at borders."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    half = window // 2
    offs = np.arange(window) - half
    g1 = np.exp(-(offs.astype(float) ** 2) / (2 * sigma ** 2))
    g1 /= g1.sum()
    c1, c2 = k1 ** 2, k2 ** 2
    out = np.zeros_like(x)
    sh = x.shape
    for i in range(sh[0]):
        for j in range(sh[1]):
            for k in range(sh[2]):
                wsum = 0.0
                mx = my = mxx = myy = mxy = 0.0
                for a, wa in zip(offs, g1):
                    ia = i + a
                    if not 0 <= ia < sh[0]:
                        continue
                    for b, wb in zip(offs, g1):
                        jb = j + b
                        if not 0 <= jb < sh[1]:
                            continue
                        for c, wc in zip(offs, g1):
                            kc = k + c
                            if not 0 <= kc < sh[2]:
                                continue
                            wgt = wa * wb * wc
                            xv = x[ia, jb, kc]
                            yv = y[ia, jb, kc]
                            wsum += wgt
                            mx += wgt * xv
                            my += wgt * yv
                            mxx += wgt * xv * xv
                            myy += wgt * yv * yv
                            mxy += wgt * xv * yv
                mx /= wsum
                my /= wsum
                vx = mxx / wsum - mx * mx
                vy = myy / wsum - my * my
                cov = mxy / wsum - mx * my
                out[i, j, k] = ((2 * mx * my + c1) * (2 * cov + c2)) / \
                               ((mx * mx + my * my + c1) * (vx + vy + c2))
    return out


def finite_difference_grad(loss_fn, tensor, index: tuple, step: float = 1e-5) -> float:
    """Central difference of loss_fn() wrt one scalar entry of a torch tensor."""
    with_no_grad = tensor.detach()
    orig = float(with_no_grad[index])
    with_no_grad[index] = orig + step
    hi = float(loss_fn())
    with_no_grad[index] = orig - step
    lo = float(loss_fn())
    with_no_grad[index] = orig
    return (hi - lo) / (2 * step)
