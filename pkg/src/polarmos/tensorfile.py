"""The "MBEV" binary tensor container.

Two record layouts share the 4-byte magic. All integers are little-endian
int32 and all payloads little-endian float32.

Version 1 (motion-feature export, one record per file)::

    "MBEV" | version=1 | h | w | C | frame_index | h*w*C float32, channel-major

Channel-major means the payload is the (C, h, w) transposition of the
in-memory (h, w, C) feature tensor, flattened in C order.

Version 2 (generic named tensors, e.g. model parameters; records are simply
concatenated)::

    "MBEV" | version=2 | ndim | dim_0 .. dim_{ndim-1} | name_len | name utf-8 | float32 payload
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence, Union

import numpy as np

PathLike = Union[str, Path]

MAGIC = b"MBEV"
_I32 = struct.Struct("<i")


def _read_i32(buf: bytes, off: int) -> tuple[int, int]:
    (val,) = _I32.unpack_from(buf, off)
    return val, off + 4


def write_feature_file(path: PathLike, values_hwc: np.ndarray, frame_index: int) -> None:
    """Write an (h, w, C) feature tensor as a version-1 record."""
    values_hwc = np.asarray(values_hwc)
    if values_hwc.ndim != 3:
        raise ValueError(f"expected (h, w, C) tensor, got shape {values_hwc.shape}")
    h, w, c = values_hwc.shape
    payload = np.ascontiguousarray(values_hwc.transpose(2, 0, 1), dtype="<f4")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<5i", 1, h, w, c, frame_index))
        f.write(payload.tobytes())


def read_feature_file(path: PathLike) -> tuple[np.ndarray, int]:
    """Read a version-1 record back into ((h, w, C) float32, frame_index)."""
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {buf[:4]!r}")
    version, h, w, c, frame_index = struct.unpack_from("<5i", buf, 4)
    if version != 1:
        raise ValueError(f"{path}: expected version 1 record, got {version}")
    expected = 24 + 4 * h * w * c
    if len(buf) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(buf)}")
    data = np.frombuffer(buf, dtype="<f4", offset=24).reshape(c, h, w)
    return np.ascontiguousarray(data.transpose(1, 2, 0)), frame_index


def write_tensor_records(path: PathLike, tensors: Sequence[tuple[str, np.ndarray]]) -> None:
    """Write named tensors as concatenated version-2 records."""
    with open(path, "wb") as f:
        for name, arr in tensors:
            arr = np.asarray(arr, dtype="<f4")
            name_bytes = name.encode("utf-8")
            f.write(MAGIC)
            f.write(struct.pack("<2i", 2, arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}i", *arr.shape))
            f.write(struct.pack("<i", len(name_bytes)))
            f.write(name_bytes)
            f.write(np.ascontiguousarray(arr).tobytes())


def read_tensor_records(path: PathLike) -> list[tuple[str, np.ndarray]]:
    """Read back every version-2 record of a file, in order."""
    buf = Path(path).read_bytes()
    out = []
    off = 0
    while off < len(buf):
        if buf[off : off + 4] != MAGIC:
            raise ValueError(f"{path}: bad magic at byte {off}")
        off += 4
        version, off = _read_i32(buf, off)
        if version != 2:
            raise ValueError(f"{path}: expected version 2 record at byte {off - 8}, got {version}")
        ndim, off = _read_i32(buf, off)
        dims = []
        for _ in range(ndim):
            d, off = _read_i32(buf, off)
            dims.append(d)
        name_len, off = _read_i32(buf, off)
        name = buf[off : off + name_len].decode("utf-8")
        off += name_len
        count = int(np.prod(dims, dtype=np.int64)) if dims else 1
        arr = np.frombuffer(buf, dtype="<f4", count=count, offset=off).reshape(dims)
        off += 4 * count
        out.append((name, arr.copy()))
    return out
