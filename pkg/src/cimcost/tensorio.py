"""Bit-exact binary container for named tensors (weights, masks, dumps).

Layout, all integers little-endian:

    magic  b"CIMT"
    u8     version (currently 1)
    u32    tensor count
    per tensor:
        u16    name length, then that many UTF-8 bytes
        u8     dtype code (see DTYPES)
        u8     rank
        u64[]  extents
        raw    row-major payload

DTYPES: 1 uint8, 2 uint16, 3 uint32, 4 int8, 5 int16, 6 int32,
7 float32, 8 float64.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"CIMT"
VERSION = 1

DTYPES = {
    1: np.dtype("<u1"),
    2: np.dtype("<u2"),
    3: np.dtype("<u4"),
    4: np.dtype("<i1"),
    5: np.dtype("<i2"),
    6: np.dtype("<i4"),
    7: np.dtype("<f4"),
    8: np.dtype("<f8"),
}
CODES = {v: k for k, v in DTYPES.items()}


class ContainerError(ValueError):
    pass


def write_tensors(path, tensors: dict[str, np.ndarray]):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<B", VERSION))
        f.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr)
            dtype = arr.dtype.newbyteorder("<")
            if dtype not in CODES:
                raise ContainerError(f"tensor {name!r}: unsupported dtype {arr.dtype}")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<BB", CODES[dtype], arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(arr.astype(dtype, copy=False).tobytes())


def read_tensors(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ContainerError(f"{path}: bad magic, not a tensor container")
        (version,) = struct.unpack("<B", f.read(1))
        if version != VERSION:
            raise ContainerError(f"{path}: unsupported container version {version}")
        (count,) = struct.unpack("<I", f.read(4))
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            code, rank = struct.unpack("<BB", f.read(2))
            if code not in DTYPES:
                raise ContainerError(f"{path}: unknown dtype code {code}")
            shape = struct.unpack(f"<{rank}Q", f.read(8 * rank)) if rank else ()
            dtype = DTYPES[code]
            n = int(np.prod(shape)) if shape else 1
            payload = f.read(n * dtype.itemsize)
            if len(payload) != n * dtype.itemsize:
                raise ContainerError(f"{path}: truncated payload for tensor {name!r}")
            out[name] = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    return out
