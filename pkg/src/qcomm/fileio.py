"""Tensor and chunk file formats.

Tensor files: magic "FCTN", u32 element count, little-endian float32 data.
Chunk files: one or more serialized chunks back to back.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .codec import QuantizedChunk, parse_chunk
from .errors import DecodeFormatError

TENSOR_MAGIC = b"FCTN"
_TENSOR_HEADER = struct.Struct("<4sI")


def write_tensor(path, values) -> None:
    arr = np.asarray(values, dtype="<f4").reshape(-1)
    with open(path, "wb") as fh:
        fh.write(_TENSOR_HEADER.pack(TENSOR_MAGIC, arr.size))
        fh.write(arr.tobytes())


def read_tensor(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) < _TENSOR_HEADER.size:
        raise DecodeFormatError(f"{path}: too short for a tensor header")
    magic, count = _TENSOR_HEADER.unpack_from(buf, 0)
    if magic != TENSOR_MAGIC:
        raise DecodeFormatError(f"{path}: bad magic {magic!r}")
    expected = _TENSOR_HEADER.size + 4 * count
    if len(buf) != expected:
        raise DecodeFormatError(f"{path}: expected {expected} bytes, found {len(buf)}")
    return np.frombuffer(buf, dtype="<f4", count=count, offset=_TENSOR_HEADER.size).copy()


def write_chunks(path, chunks) -> None:
    with open(path, "wb") as fh:
        for chunk in chunks:
            fh.write(chunk.to_bytes())


def read_chunks(path) -> list[QuantizedChunk]:
    buf = Path(path).read_bytes()
    chunks = []
    pos = 0
    while pos < len(buf):
        chunk, pos = parse_chunk(buf, pos)
        chunks.append(chunk)
    return chunks
