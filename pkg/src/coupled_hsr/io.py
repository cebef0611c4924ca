"""Binary cube/matrix files and degradation bundles.

Cube file layout (little-endian)::

    b"HSRC"  u16 version  u32 I  u32 J  u32 K  float64[I*J*K] column-major

Matrices use ``b"HSRM"`` with two u32 dimensions.  A degradation bundle is
``b"HSRD"``, u16 version, u32 length of a UTF-8 JSON parameter block, the
block itself and three matrix records ``P1``, ``P2``, ``P_M``.
"""

from __future__ import annotations

import csv
import io as _io
import json
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .degradation import DegradationSet

__all__ = [
    "BadMagic",
    "CubeFormatError",
    "DimensionOverflow",
    "FORMAT_VERSION",
    "TruncatedPayload",
    "UnsupportedVersion",
    "ingest",
    "read_cube",
    "read_degradation",
    "read_matrix",
    "write_cube",
    "write_degradation",
    "write_matrix",
]

FORMAT_VERSION = 1
_CUBE_MAGIC = b"HSRC"
_MATRIX_MAGIC = b"HSRM"
_DEG_MAGIC = b"HSRD"
_U32_MAX = 2**32 - 1
# Refuse payloads that could not be held in memory on any sane machine (64 GiB).
_MAX_PAYLOAD_BYTES = 1 << 36


class CubeFormatError(ValueError):
    """Malformed cube, matrix or degradation file."""


class BadMagic(CubeFormatError):
    pass


class UnsupportedVersion(CubeFormatError):
    pass


class TruncatedPayload(CubeFormatError):
    def __init__(self, expected: int, actual: int, what: str = "payload"):
        super().__init__(f"truncated {what}: expected {expected} bytes, got {actual}")
        self.expected = expected
        self.actual = actual


class DimensionOverflow(CubeFormatError):
    pass


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedPayload(n, len(data), what)
    return data


def _write_array(fh: BinaryIO, magic: bytes, arr: np.ndarray) -> None:
    if any(d > _U32_MAX for d in arr.shape):
        raise DimensionOverflow(f"dimension exceeds u32: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("array has non-finite entries")
    fh.write(magic)
    fh.write(struct.pack("<H", FORMAT_VERSION))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(np.asarray(arr, dtype="<f8").tobytes(order="F"))


def _read_array(fh: BinaryIO, magic: bytes, ndim: int) -> np.ndarray:
    head = _read_exact(fh, 4, "magic")
    if head != magic:
        raise BadMagic(f"expected magic {magic!r}, found {head!r}")
    (version,) = struct.unpack("<H", _read_exact(fh, 2, "version"))
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"format version {version} is not supported (expected {FORMAT_VERSION})")
    dims = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, "dimensions"))
    n_bytes = 8 * int(np.prod(dims, dtype=object))
    if n_bytes > _MAX_PAYLOAD_BYTES:
        raise DimensionOverflow(f"dimensions {dims} imply a {n_bytes}-byte payload")
    payload = _read_exact(fh, n_bytes, "payload")
    arr = np.frombuffer(payload, dtype="<f8").reshape(dims, order="F")
    return arr.astype(float, order="F", copy=True)


def write_cube(path: str | Path, cube: np.ndarray) -> None:
    cube = np.asarray(cube, dtype=float)
    if cube.ndim != 3:
        raise ValueError(f"cube must be 3-way, got shape {cube.shape}")
    with open(path, "wb") as fh:
        _write_array(fh, _CUBE_MAGIC, cube)


def read_cube(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        return _read_array(fh, _CUBE_MAGIC, 3)


def write_matrix(path: str | Path, m: np.ndarray) -> None:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    with open(path, "wb") as fh:
        _write_array(fh, _MATRIX_MAGIC, m)


def read_matrix(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        return _read_array(fh, _MATRIX_MAGIC, 2)


def write_degradation(path: str | Path, deg: DegradationSet) -> None:
    params = json.dumps(deg.params, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_DEG_MAGIC)
        fh.write(struct.pack("<HI", FORMAT_VERSION, len(params)))
        fh.write(params)
        for m in (deg.p1, deg.p2, deg.pm):
            _write_array(fh, _MATRIX_MAGIC, m)


def read_degradation(path: str | Path) -> DegradationSet:
    with open(path, "rb") as fh:
        head = _read_exact(fh, 4, "magic")
        if head != _DEG_MAGIC:
            raise BadMagic(f"expected magic {_DEG_MAGIC!r}, found {head!r}")
        version, n = struct.unpack("<HI", _read_exact(fh, 6, "header"))
        if version != FORMAT_VERSION:
            raise UnsupportedVersion(f"format version {version} is not supported (expected {FORMAT_VERSION})")
        params = json.loads(_read_exact(fh, n, "parameter block").decode())
        p1, p2, pm = (_read_array(fh, _MATRIX_MAGIC, 2) for _ in range(3))
    deg = DegradationSet(p1, p2, pm, params)
    if p1.shape[1] == 0 or p2.shape[1] == 0 or pm.shape[1] == 0:
        raise CubeFormatError("degradation matrices must be non-empty")
    return deg


def ingest(src: str | Path, dims: tuple[int, int, int] | None = None, dtype: str = "<f4", order: str = "bsq") -> np.ndarray:
    """Read a user-supplied cube from a flat binary file or a CSV band stack.

    Flat binaries need ``dims`` (I, J, K), a numpy ``dtype`` string and an
    interleave ``order``: ``"bsq"`` (band-sequential, each band row-major),
    ``"bil"`` or ``"bip"``.  A ``.csv`` file holds one band per column and one
    pixel per row, pixels in row-major image order; ``dims`` gives (I, J) or
    (I, J, K).
    """
    src = Path(src)
    if src.suffix.lower() == ".csv":
        with open(src, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
        data = np.array(rows, dtype=float)
        if dims is None:
            raise ValueError("CSV ingest needs the image size (I, J)")
        i, j = dims[:2]
        if data.shape[0] != i * j:
            raise ValueError(f"{src}: {data.shape[0]} pixels, expected {i}x{j}={i * j}")
        return np.asfortranarray(data.reshape(i, j, data.shape[1]))
    if dims is None or len(dims) != 3:
        raise ValueError("flat binary ingest needs dims (I, J, K)")
    i, j, k = dims
    raw = src.read_bytes()
    item = np.dtype(dtype).itemsize
    if len(raw) != i * j * k * item:
        raise TruncatedPayload(i * j * k * item, len(raw))
    flat = np.frombuffer(raw, dtype=dtype).astype(float)
    order = order.lower()
    if order == "bsq":
        cube = flat.reshape(k, i, j).transpose(1, 2, 0)
    elif order == "bil":
        cube = flat.reshape(i, k, j).transpose(0, 2, 1)
    elif order == "bip":
        cube = flat.reshape(i, j, k)
    else:
        raise ValueError(f"unknown interleave {order!r}")
    if not np.all(np.isfinite(cube)):
        raise ValueError(f"{src}: non-finite values")
    return np.asfortranarray(cube)


def cube_bytes(cube: np.ndarray) -> bytes:
    """Serialized cube file contents, for hashing and tests."""
    buf = _io.BytesIO()
    _write_array(buf, _CUBE_MAGIC, np.asarray(cube, dtype=float))
    return buf.getvalue()
