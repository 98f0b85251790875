"""EAWT weights container: little-endian tensors with a small header."""

import struct

import numpy as np

from ..errors import BadMagic, TruncatedFile, VersionMismatch

MAGIC = b"EAWT"
VERSION = 1


def _read_exact(fh, n):
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedFile(f"expected {n} bytes, got {len(buf)}")
    return buf


def write_weights(fh, tensors) -> None:
    fh.write(MAGIC)
    fh.write(struct.pack("<II", VERSION, len(tensors)))
    for t in tensors:
        t = np.asarray(t)
        fh.write(struct.pack("<B", t.ndim))
        fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
        fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def read_weights(fh):
    """Read tensors back as float32 arrays; sizes are validated against the header."""
    magic = fh.read(4)
    if magic != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, got {magic!r}")
    version, n = struct.unpack("<II", _read_exact(fh, 8))
    if version != VERSION:
        raise VersionMismatch(f"weights version {version}, expected {VERSION}")
    tensors = []
    for _ in range(n):
        (rank,) = struct.unpack("<B", _read_exact(fh, 1))
        dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank))
        count = int(np.prod(dims, dtype=np.int64))
        data = np.frombuffer(_read_exact(fh, 4 * count), dtype="<f4")
        tensors.append(data.astype(np.float32).reshape(dims))
    if fh.read(1):
        raise TruncatedFile("trailing bytes after last tensor")
    return tensors
