"""Binary array container shared by snapshot matrices and heatmap tensors.

Layout, all little-endian:

    magic   4 bytes  b"STAP"
    version u16      currently 1
    flags   u16      bit 0 set for complex payloads
    ndim    u16      rank of the stored array (2 for snapshots, 3 for tensors)
    dims    u32 * ndim
    payload float64, column-major; complex entries interleaved real/imag

The rank field generalizes the two-dimensional snapshot case so one reader
covers matrices and rank-3 tensors alike.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"STAP"
VERSION = 1
_FLAG_COMPLEX = 0x1


def write_array(path, array: np.ndarray) -> None:
    arr = np.asarray(array)
    complex_payload = np.iscomplexobj(arr)
    flags = _FLAG_COMPLEX if complex_payload else 0
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HHH", VERSION, flags, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        if complex_payload:
            data = np.asfortranarray(arr, dtype="<c16")
        else:
            data = np.asfortranarray(arr, dtype="<f8")
        fh.write(data.tobytes(order="F"))


def read_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        version, flags, ndim = struct.unpack("<HHH", fh.read(6))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        dims = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
        count = int(np.prod(dims)) if ndim else 1
        dtype = "<c16" if flags & _FLAG_COMPLEX else "<f8"
        itemsize = np.dtype(dtype).itemsize
        buf = fh.read(count * itemsize)
        if len(buf) != count * itemsize:
            raise ValueError(f"{path}: truncated payload")
        return np.frombuffer(buf, dtype=dtype).reshape(dims, order="F").copy()
