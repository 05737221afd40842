"""EWSF: versioned little-endian container for gridded scalar and vector fields.

Layout (64-byte header, then payload)::

    offset  size  field
    0       4     magic b"EWSF"
    4       2     version (u16) = 1
    6       1     dtype code (u8): 1 = f64, 2 = c128
    7       1     rank (u8): 0 scalar, 1 vector
    8       4     components (u32)
    12      12    dims (3 x u32)
    24      24    origin (3 x f64)
    48      8     spacing (f64)
    56      8     payload byte count (u64)
    64      ...   payload, component-major, C order within a component
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .randfield import Grid3

MAGIC = b"EWSF"
VERSION = 1
HEADER = struct.Struct("<4sHBBI3I3ddQ")
DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<c16")}
CODES = {np.dtype("f8"): 1, np.dtype("c16"): 2}

assert HEADER.size == 64


class EWSFError(ValueError):
    pass


@dataclass(frozen=True)
class EWSFHeader:
    dtype_code: int
    rank: int
    components: int
    dims: tuple
    origin: tuple
    spacing: float
    payload_nbytes: int
    version: int = VERSION

    @property
    def dtype(self) -> np.dtype:
        return DTYPES[self.dtype_code]

    def expected_nbytes(self) -> int:
        return int(np.prod(self.dims)) * self.components * self.dtype.itemsize

    def pack(self) -> bytes:
        return HEADER.pack(
            MAGIC, self.version, self.dtype_code, self.rank, self.components,
            *self.dims, *self.origin, self.spacing, self.payload_nbytes,
        )

    @classmethod
    def unpack(cls, raw: bytes) -> "EWSFHeader":
        if len(raw) < HEADER.size:
            raise EWSFError(f"file too short for an EWSF header ({len(raw)} bytes)")
        magic, version, code, rank, comps, d0, d1, d2, o0, o1, o2, h, nbytes = HEADER.unpack(raw[: HEADER.size])
        if magic != MAGIC:
            raise EWSFError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise EWSFError(f"unsupported EWSF version {version} (this reader handles {VERSION})")
        if code not in DTYPES:
            raise EWSFError(f"unknown dtype code {code}")
        hdr = cls(code, rank, comps, (d0, d1, d2), (o0, o1, o2), h, nbytes, version)
        if nbytes != hdr.expected_nbytes():
            raise EWSFError(f"header declares {nbytes} payload bytes but dims imply {hdr.expected_nbytes()}")
        return hdr

    def grid(self) -> Grid3:
        if len(set(self.dims)) != 1:
            raise EWSFError(f"non-cubic dims {self.dims}")
        n = self.dims[0]
        return Grid3(self.origin, self.spacing * n, n)


def header_for(grid: Grid3, values: np.ndarray) -> EWSFHeader:
    values = np.asarray(values)
    code = CODES.get(values.dtype)
    if code is None:
        raise EWSFError(f"unsupported dtype {values.dtype}; use float64 or complex128")
    if values.shape == grid.shape:
        rank, comps = 0, 1
    elif values.ndim == 4 and values.shape[1:] == grid.shape:
        rank, comps = 1, values.shape[0]
    else:
        raise EWSFError(f"array shape {values.shape} does not fit grid {grid.shape}")
    hdr = EWSFHeader(code, rank, comps, grid.shape, grid.origin, grid.h, 0)
    return EWSFHeader(code, rank, comps, grid.shape, grid.origin, grid.h, hdr.expected_nbytes())


def write_ewsf(path, grid: Grid3, values: np.ndarray) -> EWSFHeader:
    values = np.asarray(values)
    hdr = header_for(grid, values)
    payload = np.ascontiguousarray(values, dtype=hdr.dtype).tobytes(order="C")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(hdr.pack())
        fh.write(payload)
    tmp.replace(path)
    return hdr


def read_header(path) -> EWSFHeader:
    with open(path, "rb") as fh:
        return EWSFHeader.unpack(fh.read(HEADER.size))


def read_ewsf(path, expect_grid: Grid3 | None = None):
    """Return ``(grid, values)``; ``expect_grid`` guards against loading onto the wrong grid."""
    raw = Path(path).read_bytes()
    hdr = EWSFHeader.unpack(raw)
    payload = raw[HEADER.size :]
    if len(payload) != hdr.payload_nbytes:
        raise EWSFError(f"truncated payload: {len(payload)} of {hdr.payload_nbytes} bytes")
    grid = hdr.grid()
    if expect_grid is not None and (
        expect_grid.n != grid.n
        or not np.allclose(expect_grid.origin, grid.origin, rtol=0, atol=1e-12 * max(1.0, grid.side))
        or not np.isclose(expect_grid.h, grid.h, rtol=1e-12, atol=0)
    ):
        raise EWSFError(f"field grid {grid} does not match the expected grid {expect_grid}")
    shape = grid.shape if hdr.rank == 0 else (hdr.components,) + grid.shape
    values = np.frombuffer(payload, dtype=hdr.dtype).reshape(shape).astype(hdr.dtype.newbyteorder("="))
    return (expect_grid or grid), values
