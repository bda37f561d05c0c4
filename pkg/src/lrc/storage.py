"""Deterministic on-disk containers and atomic file writes.

Binary container layout (all integers little-endian):

    offset  size        content
    0       4           magic (4 ASCII bytes, includes format version)
    4       4           uint32 header length N
    8       N           canonical JSON header (UTF-8, sorted keys)
    8+N     ...         raw array bytes, concatenated in header order

The header's ``"arrays"`` entry lists ``[name, dtype, shape]`` triples in
storage order, so the payload can be sliced back without guessing.  The
container is byte-reproducible: identical content always serializes to
identical bytes (no timestamps, no compression).
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np


class StorageError(ValueError):
    """Raised for malformed or mismatched container files."""


def canonical_json(obj) -> str:
    """Serialize to the canonical JSON form used for files and fingerprints."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def pack_container(magic: bytes, header: dict, arrays: dict[str, np.ndarray]) -> bytes:
    if len(magic) != 4:
        raise ValueError("magic must be exactly 4 bytes")
    header = dict(header)
    header["arrays"] = [
        [name, str(arr.dtype), list(arr.shape)] for name, arr in arrays.items()
    ]
    head = canonical_json(header).encode("utf-8")
    parts = [magic, struct.pack("<I", len(head)), head]
    for arr in arrays.values():
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def unpack_container(data: bytes, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if data[:4] != magic:
        raise StorageError(
            f"bad magic: expected {magic!r}, found {data[:4]!r}"
        )
    (head_len,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8 : 8 + head_len].decode("utf-8"))
    offset = 8 + head_len
    arrays = {}
    for name, dtype, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * np.dtype(dtype).itemsize
        if offset + nbytes > len(data):
            raise StorageError(f"truncated container: array {name!r} incomplete")
        arrays[name] = np.frombuffer(
            data[offset : offset + nbytes], dtype=dtype
        ).reshape(shape)
        offset += nbytes
    return header, arrays


def read_container(path, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    return unpack_container(Path(path).read_bytes(), magic)


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
