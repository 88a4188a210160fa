"""Minimal NIfTI-1 reader/writer.

Supports the single-file flavour (.nii, .nii.gz), little-endian, with the
datatypes this package emits (uint8, int16, int32, float32, float64).
Spacing is carried in pixdim[1:4]; scl_slope/scl_inter are honoured on read.
"""

from __future__ import annotations

import gzip
import os
import struct

import numpy as np

HEADER_SIZE = 348
MAGIC = b"n+1\x00"

# NIfTI-1 datatype codes
_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
}
_CODES = {np.dtype(np.uint8): 2, np.dtype(np.int16): 4, np.dtype(np.int32): 8,
          np.dtype(np.float32): 16, np.dtype(np.float64): 64}


class NiftiError(ValueError):
    """Raised for unreadable or unsupported NIfTI content."""


class _DeterministicGzipWriter(gzip.GzipFile):
    """Gzip writer with fixed mtime and no embedded filename, so identical
    payloads give identical bytes; closes the underlying file too."""

    def __init__(self, path):
        self._raw = open(path, "wb")
        super().__init__(fileobj=self._raw, mode="wb", mtime=0)

    def close(self):
        try:
            super().close()
        finally:
            self._raw.close()


def _open(path, mode: str):
    if str(path).endswith(".gz"):
        if "w" in mode:
            return _DeterministicGzipWriter(path)
        return gzip.open(path, mode)
    return open(path, mode)


def read_nifti(path) -> tuple[np.ndarray, tuple[float, ...]]:
    """Read a NIfTI-1 file.

    Returns (data, spacing) where data has the on-disk axis order and
    spacing is pixdim[1:1+ndim].
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with _open(path, "rb") as fh:
        header = fh.read(HEADER_SIZE)
        if len(header) < HEADER_SIZE:
            raise NiftiError(f"truncated header in {path}")
        sizeof_hdr = struct.unpack("<i", header[:4])[0]
        if sizeof_hdr != HEADER_SIZE:
            raise NiftiError(f"bad sizeof_hdr={sizeof_hdr} in {path} (big-endian or not NIfTI-1)")
        if header[344:348] != MAGIC:
            raise NiftiError(f"bad magic {header[344:348]!r} in {path}")
        dim = struct.unpack("<8h", header[40:56])
        ndim = dim[0]
        if not 1 <= ndim <= 7:
            raise NiftiError(f"invalid dim[0]={ndim} in {path}")
        shape = tuple(int(d) for d in dim[1 : 1 + ndim])
        datatype, bitpix = struct.unpack("<hh", header[70:74])
        if datatype not in _DTYPES:
            raise NiftiError(f"unsupported datatype code {datatype} in {path}")
        dtype = np.dtype(_DTYPES[datatype]).newbyteorder("<")
        if bitpix != dtype.itemsize * 8:
            raise NiftiError(f"bitpix={bitpix} inconsistent with datatype in {path}")
        pixdim = struct.unpack("<8f", header[76:108])
        vox_offset = struct.unpack("<f", header[108:112])[0]
        scl_slope, scl_inter = struct.unpack("<2f", header[112:120])

        fh.seek(int(vox_offset))
        count = int(np.prod(shape))
        raw = fh.read(count * dtype.itemsize)
        if len(raw) < count * dtype.itemsize:
            raise NiftiError(f"truncated data payload in {path}")
        data = np.frombuffer(raw, dtype=dtype).reshape(shape, order="F")

    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        slope = scl_slope if scl_slope != 0.0 else 1.0
        data = data.astype(np.float64) * slope + scl_inter
    spacing = tuple(float(abs(p)) for p in pixdim[1 : 1 + ndim])
    return np.asarray(data), spacing


def write_nifti(path, data: np.ndarray, spacing) -> None:
    """Write `data` (Fortran voxel order, axes as given) as single-file NIfTI-1."""
    data = np.asarray(data)
    if data.ndim < 1 or data.ndim > 7:
        raise NiftiError(f"cannot write {data.ndim}-D array")
    dtype = data.dtype
    if dtype == np.bool_:
        data = data.astype(np.uint8)
        dtype = data.dtype
    if np.dtype(dtype) not in _CODES:
        data = data.astype(np.float32)
        dtype = data.dtype
    code = _CODES[np.dtype(dtype)]
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != data.ndim:
        raise NiftiError(f"spacing has {len(spacing)} entries for a {data.ndim}-D array")

    dim = [data.ndim] + list(data.shape) + [1] * (7 - data.ndim)
    pixdim = [0.0] + list(spacing) + [1.0] * (7 - data.ndim)

    header = bytearray(HEADER_SIZE)
    struct.pack_into("<i", header, 0, HEADER_SIZE)
    struct.pack_into("<8h", header, 40, *dim)
    struct.pack_into("<hh", header, 70, code, np.dtype(dtype).itemsize * 8)
    struct.pack_into("<8f", header, 76, *pixdim)
    struct.pack_into("<f", header, 108, 352.0)       # vox_offset
    struct.pack_into("<2f", header, 112, 1.0, 0.0)   # scl_slope, scl_inter
    struct.pack_into("<b", header, 123, 2)           # xyzt_units: mm
    # sform: diagonal spacing so standard viewers agree on geometry
    struct.pack_into("<h", header, 254, 1)           # sform_code
    srow = np.zeros((3, 4), dtype=np.float32)
    for i in range(min(3, data.ndim)):
        srow[i, i] = spacing[i]
    struct.pack_into("<4f", header, 280, *srow[0])
    struct.pack_into("<4f", header, 296, *srow[1])
    struct.pack_into("<4f", header, 312, *srow[2])
    header[344:348] = MAGIC

    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise FileNotFoundError(f"parent directory does not exist: {parent}")
    payload = np.asfortranarray(data).tobytes(order="F")
    with _open(path, "wb") as fh:
        fh.write(bytes(header))
        fh.write(b"\x00" * 4)  # extension flag
        fh.write(payload)
