"""Bake a point-wise MLP into a quantized voxel lookup table.

The volume [-1, 1]^3 is cut into S^3 voxels of side 2/S. Voxel (i, j, k) is
represented by the value of every channel at its low corner
(-1 + i*delta, -1 + j*delta, -1 + k*delta); values are stored as L-bit levels
between a per-channel minimum and maximum. Payload layout is voxel-major with
the m channels of one voxel contiguous, so a lookup reads one row.
"""
import math
import os
from dataclasses import dataclass

import numba
import numpy as np

from . import _binio
from .errors import FormatError, LengthMismatchError, NonFiniteError, TruncatedError

TABLE_MAGIC = b"PWLUT001"
TABLE_VERSION = 1
_FIXED_HEADER = 8 + 4 + 4 + 4 + 1 + 3

# Points sitting on a voxel's low face (the bake sample coordinates
# themselves) must index that voxel, not the one below it after rounding.
INDEX_SNAP = 1e-9


@dataclass(frozen=True)
class GridSpec:
    S: int
    L: int = 8

    def __post_init__(self):
        if int(self.S) != self.S or self.S < 2:
            raise ValueError(f"S must be an integer >= 2, got {self.S}")
        if self.L not in (8, 16):
            raise ValueError(f"L must be 8 or 16, got {self.L}")

    @property
    def delta(self):
        return 2.0 / self.S

    @property
    def levels(self):
        return 1 << self.L

    @property
    def dtype(self):
        return np.dtype(np.uint8 if self.L == 8 else np.uint16)


def table_payload_bytes(m, S, L):
    """m * L * S^3 bits, in bytes."""
    return m * S ** 3 * L // 8


def table_header_bytes(m):
    return _FIXED_HEADER + 8 * m


def sample_axis(spec):
    """Sample coordinate of each voxel along one axis."""
    return -1.0 + np.arange(spec.S) * spec.delta


def voxel_index(points, spec):
    """Integer voxel index of each point, clamped into [0, S-1].

    Works on a single (3,) point or any (..., 3) array.
    """
    p = np.asarray(points, dtype=np.float64)
    if np.isnan(p).any():
        raise ValueError("NaN coordinate")
    t = np.floor((p + 1.0) / spec.delta + INDEX_SNAP)
    return np.clip(t, 0, spec.S - 1).astype(np.int64)


def quantize(r, vmin, vmax, L):
    """Level ``floor((r - min) / (max - min) * 2^L)`` clamped to [0, 2^L - 1]; 0 when max == min."""
    r = np.asarray(r, dtype=np.float64)
    vmin = np.asarray(vmin, dtype=np.float64)
    vmax = np.asarray(vmax, dtype=np.float64)
    width = vmax - vmin
    flat = width == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.floor((r - vmin) / np.where(flat, 1.0, width) * float(1 << L))
    q = np.where(flat, 0.0, q)
    q = np.clip(q, 0, (1 << L) - 1)
    return q.astype(np.int64) if q.ndim else int(q)


@numba.njit(cache=True, nogil=True)
def _quantize_rows(h, vmin, vmax, L, out):
    # same float64 operations as quantize(), fused, written into uint levels
    top = (1 << L) - 1
    scale = float(1 << L)
    for n in range(h.shape[0]):
        for s in range(h.shape[1]):
            width = vmax[s] - vmin[s]
            if width == 0.0:
                out[n, s] = 0
                continue
            q = math.floor((np.float64(h[n, s]) - vmin[s]) / width * scale)
            out[n, s] = 0 if q < 0 else (top if q > top else int(q))


def dequantize(q, vmin, vmax, L):
    """Inverse of :func:`quantize`: the low edge of level q's interval."""
    q = np.asarray(q, dtype=np.float64)
    vmin = np.asarray(vmin, dtype=np.float64)
    vmax = np.asarray(vmax, dtype=np.float64)
    out = q * (vmax - vmin) / float(1 << L) + vmin
    return out if out.ndim else float(out)


def _outward_f32(lo, hi):
    """Round per-channel bounds to float32 without shrinking the interval."""
    lo32, hi32 = lo.astype(np.float32), hi.astype(np.float32)
    lo32 = np.where(lo32.astype(np.float64) > lo, np.nextafter(lo32, np.float32(-np.inf)), lo32)
    hi32 = np.where(hi32.astype(np.float64) < hi, np.nextafter(hi32, np.float32(np.inf)), hi32)
    return lo32, hi32


@dataclass(frozen=True)
class LookupTable:
    spec: GridSpec
    mins: np.ndarray  # (m,) float32
    maxs: np.ndarray  # (m,) float32
    data: np.ndarray  # (S, S, S, m) levels, uint8 or uint16

    def __post_init__(self):
        S, m = self.spec.S, len(self.mins)
        if self.data.shape != (S, S, S, m):
            raise ValueError(f"table data shape {self.data.shape} != {(S, S, S, m)}")
        if self.data.dtype != self.spec.dtype:
            raise ValueError(f"table data dtype {self.data.dtype} does not match L={self.spec.L}")
        if np.any(self.mins > self.maxs):
            raise ValueError("per-channel min exceeds max")

    @property
    def m(self):
        return len(self.mins)

    @property
    def payload_nbytes(self):
        return table_payload_bytes(self.m, self.spec.S, self.spec.L)

    def rows(self):
        """Payload as ``(S^3, m)``; row ``(i*S + j)*S + k`` is voxel (i, j, k)."""
        return self.data.reshape(-1, self.m)

    def dequantize(self, levels):
        return dequantize(levels, self.mins, self.maxs, self.spec.L)


def _slab_values(model, spec, i, axis):
    jj, kk = np.meshgrid(axis, axis, indexing="ij")
    pts = np.column_stack([np.full(jj.size, axis[i]), jj.ravel(), kk.ravel()])
    h = model.forward(pts)
    if not np.isfinite(h).all():
        bad = np.argwhere(~np.isfinite(h))[0]
        raise NonFiniteError(f"non-finite model output at sample {pts[bad[0]]}, channel {bad[1]}")
    return h


def bake(model, spec, out=None, progress=None):
    """Tabulate every channel of ``model`` on the grid and quantize it.

    Two passes over the voxels: the first finds exact per-channel extremes
    over all S^3 samples, the second quantizes. With ``out`` the payload is
    streamed into a table file and the returned table is memory-mapped from
    it, which is how tables larger than RAM are built.
    """
    S, m = spec.S, model.m
    axis = sample_axis(spec)
    keep_values = S ** 3 * m * 8 <= (256 << 20)
    cache = []
    lo = np.full(m, np.inf)
    hi = np.full(m, -np.inf)
    for i in range(S):
        h = _slab_values(model, spec, i, axis)
        lo = np.minimum(lo, h.min(axis=0))
        hi = np.maximum(hi, h.max(axis=0))
        if keep_values:
            cache.append(h)
        if progress:
            progress("minmax", i + 1, S)
    mins, maxs = _outward_f32(lo, hi)

    lo64, hi64 = mins.astype(np.float64), maxs.astype(np.float64)
    data = np.empty((S, S, S, m), dtype=spec.dtype) if out is None else None
    slab = np.empty((S * S, m), dtype=spec.dtype)
    fh = open(out, "wb") if out is not None else None
    try:
        if fh:
            fh.write(_header_bytes(spec, mins, maxs))
        for i in range(S):
            h = cache[i] if keep_values else _slab_values(model, spec, i, axis)
            _quantize_rows(h, lo64, hi64, spec.L, slab)
            if fh:
                fh.write(slab.astype(spec.dtype.newbyteorder("<"), copy=False).tobytes())
            else:
                data[i] = slab.reshape(S, S, m)
            if progress:
                progress("quantize", i + 1, S)
    finally:
        if fh:
            fh.close()
    if out is not None:
        return read_table(out, mmap=True)
    return LookupTable(spec, mins, maxs, data)


# --- PWLUT001 ----------------------------------------------------------------

def _header_bytes(spec, mins, maxs):
    return b"".join([
        TABLE_MAGIC, _binio.u32(TABLE_VERSION), _binio.u32(spec.S), _binio.u32(len(mins)),
        bytes([spec.L, 0, 0, 0]), _binio.f32_bytes(mins), _binio.f32_bytes(maxs),
    ])


def create_table_file(path, spec, mins, maxs):
    """Write the header, size the file for the full payload, and memory-map the payload."""
    header = _header_bytes(spec, mins, maxs)
    m = len(mins)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.truncate(len(header) + table_payload_bytes(m, spec.S, spec.L))
    return np.memmap(path, dtype=spec.dtype.newbyteorder("<"), mode="r+", offset=len(header),
                     shape=(spec.S, spec.S, spec.S, m))


def write_table(table, path):
    spec = table.spec
    with open(path, "wb") as fh:
        fh.write(_header_bytes(spec, table.mins, table.maxs))
        le = spec.dtype.newbyteorder("<")
        for i in range(spec.S):
            fh.write(np.ascontiguousarray(table.data[i], dtype=le).tobytes())


@dataclass(frozen=True)
class TableHeader:
    spec: GridSpec
    m: int
    mins: np.ndarray
    maxs: np.ndarray

    @property
    def header_nbytes(self):
        return table_header_bytes(self.m)

    @property
    def payload_nbytes(self):
        return table_payload_bytes(self.m, self.spec.S, self.spec.L)


def read_table_header(path):
    """Parse and validate a table header without touching the payload."""
    with open(path, "rb") as fh:
        fixed = fh.read(_FIXED_HEADER)
        r = _binio.Reader(fixed, "table")
        _binio.check_header(r, TABLE_MAGIC, TABLE_VERSION)
        S, m, L = r.u32(), r.u32(), r.u8()
        r.take(3)
        if L not in (8, 16):
            raise FormatError(f"table: L={L} is not 8 or 16")
        try:
            spec = GridSpec(S, L)
        except ValueError as exc:
            raise FormatError(f"table: {exc}") from None
        r = _binio.Reader(fh.read(8 * m), "table")
        mins, maxs = r.array("f4", m), r.array("f4", m)
    header = TableHeader(spec, m, mins, maxs)
    size = os.path.getsize(path)
    expected = header.header_nbytes + header.payload_nbytes
    if size != expected:
        raise LengthMismatchError(
            f"table: header declares S={S}, m={m}, L={L} ({header.payload_nbytes} payload bytes) "
            f"but file holds {size - header.header_nbytes}"
        )
    return header


def read_table(path, mmap=False):
    h = read_table_header(path)
    S, m = h.spec.S, h.m
    le = h.spec.dtype.newbyteorder("<")
    if mmap:
        data = np.memmap(path, dtype=le, mode="r", offset=h.header_nbytes, shape=(S, S, S, m))
    else:
        data = np.fromfile(path, dtype=le, offset=h.header_nbytes).reshape(S, S, S, m)
        data = data.astype(h.spec.dtype, copy=False)
    return LookupTable(h.spec, h.mins, h.maxs, data)


def describe(header_or_table):
    t = header_or_table
    return (f"S={t.spec.S} m={t.m} L={t.spec.L} delta={t.spec.delta:g} "
            f"payload={t.payload_nbytes:,} bytes ({t.payload_nbytes / 1e6:,.1f} MB)")
